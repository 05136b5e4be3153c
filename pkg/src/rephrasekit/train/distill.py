"""Sequence-level distillation: train a student on a teacher's decodes.

Stage 1 decodes every training source with the teacher (a trained model
or any callable mapping an utterance to output tokens), preserving ids
and order and dropping empty outputs. Stage 2 trains the student on the
pseudo-targets; stage 3 optionally continues on the gold targets. Because
stage 3 starts from stage 2's best checkpoint and checkpoint selection
includes epoch 0, the combined run can never validate worse than stage 2
alone.
"""

from __future__ import annotations

import numpy as np

from rephrasekit.corpus import Dataset, RephraseClass, Utterance
from rephrasekit.models.decoding import beam_decode, greedy_decode_batch
from rephrasekit.models.vocab import Vocabulary
from rephrasekit.text import Token
from rephrasekit.train.config import CopyLossConfig, DistillConfig, TrainConfig
from rephrasekit.train.loop import train_seq2seq


def _teacher_outputs(teacher, vocab, train_ds: Dataset, dcfg: DistillConfig,
                     max_len: int) -> list[list[str]]:
    sources = [src for src, _ in train_ds.pairs(normalized=True)]
    if callable(teacher) and not hasattr(teacher, "start_decode"):
        return [list(teacher(u)) for u in train_ds]
    if not hasattr(teacher, "start_decode"):
        raise ValueError(
            "teacher must expose the decode protocol or be a callable "
            "mapping an utterance to output tokens"
        )
    if dcfg.decode == "greedy":
        return greedy_decode_batch(teacher, vocab, sources, max_len=max_len)
    if dcfg.decode == "beam":
        return [
            beam_decode(teacher, vocab, src, max_len=max_len,
                        beam_width=dcfg.beam_width)
            for src in sources
        ]
    raise ValueError(f"unknown decode strategy {dcfg.decode!r}")


def _pseudo_dataset(train_ds: Dataset, outputs: list[list[str]]) -> tuple[Dataset, int]:
    """Swap gold targets for teacher outputs; empty outputs are dropped."""
    pseudo: list[Utterance] = []
    skipped = 0
    for u, out in zip(train_ds, outputs):
        if not out:
            skipped += 1
            continue
        pseudo.append(Utterance(
            id=u.id,
            query_tokens=u.query_tokens,
            content_span=u.content_span,
            rephrase_class=RephraseClass.REPHRASE,
            rephrases=(tuple(Token(s) for s in out),),
        ))
    return Dataset(pseudo, split_tag=train_ds.split_tag), skipped


def distill(
    teacher,
    student,
    vocab: Vocabulary,
    train_ds: Dataset,
    valid_ds: Dataset,
    cfg: TrainConfig,
    dcfg: DistillConfig | None = None,
    copy_cfg: CopyLossConfig | None = None,
    log_path: str | None = None,
):
    """Returns (student, report) where report carries both stage logs,
    the number of empty teacher outputs skipped, and the final valid EM."""
    if dcfg is None:
        dcfg = DistillConfig()
    outputs = _teacher_outputs(teacher, vocab, train_ds, dcfg, cfg.max_decode_len)
    pseudo_ds, skipped = _pseudo_dataset(train_ds, outputs)
    if not len(pseudo_ds):
        raise ValueError("teacher produced no non-empty outputs to distill from")

    student, kd_log = train_seq2seq(
        student, vocab, pseudo_ds, valid_ds, cfg,
        copy_cfg=copy_cfg, log_path=log_path,
    )
    report = {
        "skipped_empty": skipped,
        "n_pseudo": len(pseudo_ds),
        "kd_log": kd_log,
        "finetune_log": None,
    }
    if dcfg.finetune_on_gold:
        student, ft_log = train_seq2seq(
            student, vocab, train_ds, valid_ds, cfg,
            copy_cfg=copy_cfg, log_path=log_path,
        )
        report["finetune_log"] = ft_log
    final = report["finetune_log"] or report["kd_log"]
    report["valid_em"] = float(np.max([r["valid_em"] for r in final if "valid_em" in r]))
    return student, report
