"""Grid search over the copy hinge weight and threshold.

Every cell trains a fresh model from the same factory and seed, so cells
differ only in the hinge configuration. Ties on validation exact match
resolve to the smaller weight, then the smaller threshold: the scan walks
the grid in sorted order and only a strictly better cell replaces the
incumbent.
"""

from __future__ import annotations

import csv

import numpy as np

from rephrasekit.corpus import Dataset
from rephrasekit.models.vocab import Vocabulary
from rephrasekit.train.config import CopyLossConfig, TrainConfig
from rephrasekit.train.loop import train_seq2seq


def grid_points(
    lambdas: list[float] | None = None, ts: list[float] | None = None
) -> list[tuple[float, float]]:
    """(weight, threshold) cells; default 19 x 11 in steps of 0.05."""
    if lambdas is None:
        lambdas = [round(float(x), 2) for x in np.arange(0.10, 1.0001, 0.05)]
    if ts is None:
        ts = [round(float(x), 2) for x in np.arange(0.50, 1.0001, 0.05)]
    return [(lam, t) for lam in sorted(lambdas) for t in sorted(ts)]


def grid_search(
    model_factory,
    vocab: Vocabulary,
    train_ds: Dataset,
    valid_ds: Dataset,
    cfg: TrainConfig,
    lambdas: list[float] | None = None,
    ts: list[float] | None = None,
    csv_path: str | None = None,
):
    """Returns (best CopyLossConfig, rows of (weight, threshold, valid EM)).

    ``model_factory(seed)`` must build an identically initialized model
    per call.
    """
    rows: list[tuple[float, float, float]] = []
    best_cfg: CopyLossConfig | None = None
    best_em = -1.0
    for lam, t in grid_points(lambdas, ts):
        copy_cfg = CopyLossConfig(hinge_lambda=lam, threshold=t)
        model = model_factory(cfg.seed)
        _, log = train_seq2seq(model, vocab, train_ds, valid_ds, cfg, copy_cfg=copy_cfg)
        em = max(r["valid_em"] for r in log if "valid_em" in r)
        rows.append((lam, t, em))
        if em > best_em:
            best_em = em
            best_cfg = copy_cfg
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "T", "valid_em"])
            writer.writerows(rows)
    return best_cfg, rows
