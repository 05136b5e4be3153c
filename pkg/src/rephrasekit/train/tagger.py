"""CRF tagger training over Keep/Delete + insert-phrase edit tags.

The log-partition recursion has no length mask, so minibatches group
sequences of equal source length; correctness never depends on padding.
Gold tags come from the deterministic alignment, and prediction realizes
the Viterbi tag sequence back into tokens.
"""

from __future__ import annotations

import json
import time

import numpy as np

from rephrasekit.corpus import Dataset
from rephrasekit.editops import NOT_COVERED, PhraseVocabulary, TagSequence, realize, to_tags
from rephrasekit.metrics import em_any as _em_any_fn
from rephrasekit.metrics import exact_match as _em_fn
from rephrasekit.models.crf import CrfTagger, crf_loglik, crf_viterbi
from rephrasekit.models.vocab import EOS, Vocabulary
from rephrasekit.numcore.optim import Adam, clip_global_norm
from rephrasekit.numcore.tensor import no_grad
from rephrasekit.train.config import TrainConfig


def tag_dataset(
    dataset: Dataset,
    phrases: PhraseVocabulary,
    skip_uncovered: bool = False,
) -> list[tuple[str, list[str], TagSequence]]:
    """(utterance id, source tokens, gold tags) for every pair.

    A pair whose insert phrases fall outside ``phrases`` raises unless
    ``skip_uncovered`` drops it silently; training data is expected to be
    fully covered because the vocabulary is built from it.
    """
    items = []
    uncovered = []
    for u, (src, tgt) in zip(dataset, dataset.pairs(normalized=True)):
        seq = to_tags(src, tgt, phrases)
        if seq is NOT_COVERED:
            uncovered.append(u.id)
            continue
        items.append((u.id, src, seq))
    if uncovered and not skip_uncovered:
        raise ValueError(
            f"{len(uncovered)} pairs need phrases outside the vocabulary, "
            f"first ids: {uncovered[:5]}"
        )
    return items


def _length_batches(items, rng: np.random.Generator, batch_size: int):
    """Shuffle, then emit equal-source-length groups in chunks."""
    by_len: dict[int, list[int]] = {}
    for idx in rng.permutation(len(items)):
        by_len.setdefault(len(items[idx][1]), []).append(int(idx))
    for length in sorted(by_len):
        bucket = by_len[length]
        for lo in range(0, len(bucket), batch_size):
            yield [items[i] for i in bucket[lo : lo + batch_size]]


def predict_tagger(
    tagger: CrfTagger,
    vocab: Vocabulary,
    phrases: PhraseVocabulary,
    sources: list[list[str]],
) -> list[list[str]]:
    """Viterbi-decode each source and realize the tags into tokens."""
    was_training = tagger.training
    tagger.eval()
    outs = []
    try:
        with no_grad():
            for src in sources:
                ids = np.array([vocab.encode(src) + [EOS]])
                em = tagger.emissions(ids).data[0]
                path, _ = crf_viterbi(
                    em, tagger.transitions.data, tagger.start.data, tagger.end.data
                )
                outs.append(realize(src, tagger.decode_tags(path, phrases)))
    finally:
        tagger.train(was_training)
    return outs


def train_tagger(
    tagger: CrfTagger,
    vocab: Vocabulary,
    phrases: PhraseVocabulary,
    train_ds: Dataset,
    valid_ds: Dataset,
    cfg: TrainConfig,
    log_path: str | None = None,
):
    """Maximize CRF log-likelihood; returns (tagger, log records).

    Checkpoint selection mirrors the seq2seq loop: best validation exact
    match starting from epoch 0, ties to the lower validation loss (here
    the negative mean log-likelihood is unavailable per epoch 0, so ties
    use the negated exact-match-any rate).
    """
    rng = np.random.default_rng(cfg.seed)
    tagger.reseed_dropout(cfg.seed)
    items = tag_dataset(train_ds, phrases, skip_uncovered=True)
    if not items:
        raise ValueError("no covered training pairs to fit the tagger on")
    encoded = [
        (u_id, vocab.encode(src) + [EOS], tagger.encode_tags(seq, phrases), src)
        for u_id, src, seq in items
    ]
    valid_pairs = valid_ds.pairs(normalized=True)
    valid_utts = list(valid_ds)
    params = tagger.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    log: list[dict] = []
    t0 = time.monotonic()

    def record(rec: dict) -> None:
        log.append(rec)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")

    def valid_eval():
        preds = predict_tagger(tagger, vocab, phrases, [s for s, _ in valid_pairs])
        em = float(np.mean([_em_fn(p, u) for p, u in zip(preds, valid_utts)]))
        emany = float(np.mean([_em_any_fn(p, u) for p, u in zip(preds, valid_utts)]))
        return em, emany

    em, emany = valid_eval()
    best = {k: v.copy() for k, v in tagger.store.state_dict().items()}
    best_key = (em, emany)
    record({"epoch": 0, "train_loss": None, "valid_em": em,
            "valid_em_any": emany, "wall_time": time.monotonic() - t0})
    diverged = False

    for epoch in range(1, cfg.epochs + 1):
        tagger.train()
        total, count = 0.0, 0
        for group in _length_batches(encoded, rng, cfg.batch_size):
            ids = np.array([g[1] for g in group])
            gold = np.array([g[2] for g in group])
            emis = tagger.emissions(ids)
            loglik = crf_loglik(emis, tagger.transitions, gold,
                                tagger.start, tagger.end)
            loss = loglik * (-1.0 / len(group))
            if not np.isfinite(loss.data):
                diverged = True
                break
            loss.backward()
            clip_global_norm(params, cfg.clip_norm)
            opt.step()
            total += float(loss.data) * len(group)
            count += len(group)
        if diverged:
            record({"epoch": epoch, "diverged": True,
                    "wall_time": time.monotonic() - t0})
            break
        em, emany = valid_eval()
        if (em, emany) > best_key:
            best = {k: v.copy() for k, v in tagger.store.state_dict().items()}
            best_key = (em, emany)
        record({"epoch": epoch, "train_loss": total / max(count, 1),
                "valid_em": em, "valid_em_any": emany,
                "wall_time": time.monotonic() - t0})
        if cfg.early_stop_valid_em is not None and em >= cfg.early_stop_valid_em:
            break

    tagger.store.load_state_dict(best)
    tagger.eval()
    return tagger, log
