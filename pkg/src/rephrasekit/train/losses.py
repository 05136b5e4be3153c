"""Sequence losses over pointer-generator mixtures.

Targets live in the extended id space, so a copied out-of-vocabulary
token and its source occurrences share an id while unknown-vs-unknown
pairs never spuriously match.
"""

from __future__ import annotations

import numpy as np

from rephrasekit.models.base import MixtureDistribution
from rephrasekit.numcore import tensor as nt
from rephrasekit.numcore.tensor import Tensor
from rephrasekit.train.config import CopyLossConfig

PROB_FLOOR = 1e-30

_clamp_warnings = 0


def clamp_warning_count() -> int:
    return _clamp_warnings


def reset_clamp_warnings() -> None:
    global _clamp_warnings
    _clamp_warnings = 0


def nll_loss(dist: MixtureDistribution, tgt_ext: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean −log p_output(target) over unmasked positions.

    Probabilities below 1e-30 are clamped; each clamped position bumps a
    module-level warning counter callers can poll.
    """
    global _clamp_warnings
    tgt_ext = np.asarray(tgt_ext)
    mask = np.asarray(mask, dtype=dist.p_output.data.dtype)
    if tgt_ext.shape != dist.p_output.shape[:-1]:
        raise ValueError(f"targets {tgt_ext.shape} vs distributions {dist.p_output.shape}")
    picked = nt.gather_last(dist.p_output, tgt_ext)
    _clamp_warnings += int(((picked.data < PROB_FLOOR) & (mask > 0)).sum())
    logp = nt.log(picked, floor=PROB_FLOOR)
    denom = float(mask.sum())
    if denom == 0:
        raise ValueError("mask selects no positions")
    return (logp * nt.constant(mask)).sum() * (-1.0 / denom)


def copy_hinge_loss(
    dist: MixtureDistribution,
    tgt_ext: np.ndarray,
    src_ext: np.ndarray,
    mask: np.ndarray,
    cfg: CopyLossConfig,
) -> Tensor:
    """Sum of λ·max(T − P, 0) over target positions found in the source.

    P is the probability of producing the target token through the copy
    path: alpha_mix times the copy mass on every source position holding
    that token (or alpha_mix alone with ``hinge_on_alpha_only``). Returns
    an exact constant 0 when λ = 0 so disabling the term leaves the rest
    of the computation bit-identical.
    """
    if cfg.hinge_lambda == 0.0:
        return nt.constant(np.zeros((), dtype=dist.p_output.data.dtype))
    tgt_ext = np.asarray(tgt_ext)
    src_ext = np.atleast_2d(np.asarray(src_ext))
    dtype = dist.p_output.data.dtype
    # (B, T, S) indicator: target position t matches source position s
    match = (tgt_ext[:, :, None] == src_ext[:, None, :]).astype(dtype)
    copiable = (match.any(axis=-1) & (np.asarray(mask) > 0)).astype(dtype)
    if not copiable.any():
        return nt.constant(np.zeros((), dtype=dtype))
    alpha = nt.reshape(dist.alpha_mix, dist.alpha_mix.shape[:-1])
    if cfg.hinge_on_alpha_only:
        prob = alpha
    else:
        mass = (dist.p_copy * nt.constant(match)).sum(axis=-1)
        prob = alpha * mass
    hinge = nt.relu(cfg.threshold - prob) * nt.constant(copiable)
    return hinge.sum() * cfg.hinge_lambda
