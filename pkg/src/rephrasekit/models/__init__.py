"""Model zoo: pointer-generator LSTM, mini transformer with graftable copy
head, CRF edit tagger, plus shared layers, vocabulary, and decoding."""

from rephrasekit.models.base import MixtureDistribution, Model
from rephrasekit.models.vocab import (
    BOS,
    EOS,
    MASK,
    PAD,
    SPECIALS,
    UNK,
    Vocabulary,
    build_vocab,
)
from rephrasekit.models.pointer_lstm import PointerGenLSTM, PointerLstmConfig
from rephrasekit.models.transformer import (
    CopyHead,
    MiniTransformer,
    TransformerConfig,
    copy_head_init,
)
from rephrasekit.models.crf import CrfTagger, CrfTaggerConfig, crf_loglik, crf_viterbi
from rephrasekit.models.decoding import beam_decode, greedy_decode, greedy_decode_batch
from rephrasekit.models.denoise import DenoisePolicy, denoise_corrupt
from rephrasekit.models.io import load_model, save_model

__all__ = [
    "Model", "MixtureDistribution",
    "Vocabulary", "build_vocab", "SPECIALS", "PAD", "BOS", "EOS", "UNK", "MASK",
    "PointerGenLSTM", "PointerLstmConfig",
    "MiniTransformer", "TransformerConfig", "CopyHead", "copy_head_init",
    "CrfTagger", "CrfTaggerConfig", "crf_loglik", "crf_viterbi",
    "greedy_decode", "greedy_decode_batch", "beam_decode",
    "DenoisePolicy", "denoise_corrupt",
    "save_model", "load_model",
]
