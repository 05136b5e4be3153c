"""rephrasekit: desk-scale message content rephrasing toolkit.

Subpackages:
    text      tokenization, normalization, n-grams
    corpus    data model, loaders, splits, synthetic grammar, statistics
    metrics   EM / EM_any / BLEU / SARI and the copy-error heuristic
    editops   LCS alignment and Keep/Delete+phrase edit tagging
    numcore   dense tensors with reverse-mode autodiff and Adam
    models    pointer-generator LSTM, mini transformer with copy head, CRF tagger
    train     losses, training loops, distillation, grid search
    kernels   compiled/numpy hot-kernel backends
"""

__version__ = "0.1.0"
