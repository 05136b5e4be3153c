"""Self-contained model checkpoints: weights, architecture config, vocab."""

from __future__ import annotations

from pathlib import Path

from rephrasekit.editops import PhraseVocabulary
from rephrasekit.models.crf import CrfTagger, CrfTaggerConfig
from rephrasekit.models.pointer_lstm import PointerGenLSTM, PointerLstmConfig
from rephrasekit.models.transformer import CopyHead, MiniTransformer, TransformerConfig
from rephrasekit.models.vocab import Vocabulary
from rephrasekit.numcore.checkpoint import CheckpointError, load_checkpoint, save_checkpoint


def save_model(path: str | Path, model, vocab: Vocabulary, phrases: PhraseVocabulary | None = None) -> None:
    extra: dict = {"vocab_itos": vocab.itos}
    if phrases is not None:
        extra["phrases"] = [list(p) for p in phrases.phrases]
        extra["phrase_freqs"] = list(phrases.frequencies)
    save_checkpoint(path, model.state_dict(), model.config_dict(), extra=extra)


def load_model(path: str | Path):
    """Returns (model, vocab, phrases-or-None) rebuilt from a checkpoint."""
    tensors, manifest = load_checkpoint(path)
    config = dict(manifest["config"])
    arch = config.pop("arch", None)
    extra = manifest.get("extra", {})
    vocab = Vocabulary(extra["vocab_itos"])
    phrases = None
    if "phrases" in extra:
        phrases = PhraseVocabulary(
            tuple(tuple(p) for p in extra["phrases"]), tuple(extra["phrase_freqs"])
        )
    if arch == PointerGenLSTM.arch:
        model = PointerGenLSTM(PointerLstmConfig(**config))
    elif arch == MiniTransformer.arch:
        has_head = config.pop("has_copy_head", False)
        model = MiniTransformer(TransformerConfig(**config))
        if has_head:
            model.copy_head = CopyHead(
                model.store, model.config.d_model, model.config.d_model // model.config.n_heads
            )
    elif arch == CrfTagger.arch:
        model = CrfTagger(CrfTaggerConfig(**config))
    else:
        raise CheckpointError(f"unknown architecture {arch!r} in checkpoint")
    model.load_state_dict(tensors)
    return model, vocab, phrases
