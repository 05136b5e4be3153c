"""Training: losses, seq2seq/tagger loops, pretraining, distillation, grids."""

from rephrasekit.train.config import CopyLossConfig, DistillConfig, TrainConfig
from rephrasekit.train.losses import (
    clamp_warning_count,
    copy_hinge_loss,
    nll_loss,
    reset_clamp_warnings,
)
from rephrasekit.train.loop import (
    DivergenceError,
    encode_pair,
    finetune_with_copy,
    predict_dataset,
    pretrain_denoising,
    train_seq2seq,
)
from rephrasekit.train.distill import distill
from rephrasekit.train.gridsearch import grid_points, grid_search
from rephrasekit.train.tagger import predict_tagger, tag_dataset, train_tagger

__all__ = [
    "TrainConfig", "CopyLossConfig", "DistillConfig",
    "nll_loss", "copy_hinge_loss", "clamp_warning_count", "reset_clamp_warnings",
    "train_seq2seq", "pretrain_denoising", "finetune_with_copy",
    "predict_dataset", "encode_pair", "DivergenceError",
    "distill", "grid_points", "grid_search",
    "train_tagger", "tag_dataset", "predict_tagger",
]
