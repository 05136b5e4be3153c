import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from rephrasekit.corpus import generate_synthetic, split  # noqa: E402
from rephrasekit.models import build_vocab  # noqa: E402


@pytest.fixture(scope="session")
def tiny_corpus():
    """160 synthetic utterances split 80/10/10 with a matching vocab."""
    ds = generate_synthetic(160, seed=123)
    train, test, valid = split(ds, (0.8, 0.1, 0.1), seed=0)
    pairs = train.pairs(normalized=True)
    vocab = build_vocab(
        [s for s, _ in pairs] + [t for _, t in pairs], max_size=512
    )
    return {"train": train, "test": test, "valid": valid, "vocab": vocab}
