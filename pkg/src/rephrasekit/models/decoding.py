"""Greedy and beam decoding over the models' shared session protocol.

A model exposes ``start_decode(src_ids, src_ext, n_oov, alpha_override)``
and ``step_decode(session, prev_ids) -> ((B, vocab+oov) probs, session)``.
Extended ids (>= vocab size) name per-example source OOVs: they are emitted
as the source surface and fed back as the unknown id, since only the copy
path can produce them.
"""

from __future__ import annotations

import numpy as np

from rephrasekit.models.vocab import BOS, EOS, PAD, UNK, Vocabulary
from rephrasekit.numcore.tensor import no_grad


def _prepare(model, vocab: Vocabulary, source: list[str], alpha_override):
    ids, ext, oovs = vocab.encode_extended(source)
    session = model.start_decode(
        np.array([ids]), np.array([ext]), len(oovs), alpha_override
    )
    return session, oovs


def _to_surfaces(ids: list[int], vocab: Vocabulary, oovs: list[str]) -> list[str]:
    return [vocab.surface_extended(i, oovs) for i in ids if i != EOS]


def greedy_decode(
    model,
    vocab: Vocabulary,
    source: list[str],
    max_len: int = 32,
    alpha_override: float | None = None,
) -> list[str]:
    """Argmax at every step (ties take the lowest id) until EOS or max_len."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            session, oovs = _prepare(model, vocab, source, alpha_override)
            prev = BOS
            out: list[int] = []
            for _ in range(max_len):
                dist, session = model.step_decode(session, prev)
                nxt = int(np.argmax(dist[0]))
                if nxt == EOS:
                    break
                out.append(nxt)
                prev = nxt if nxt < len(vocab) else UNK
    finally:
        model.train(was_training)
    return _to_surfaces(out, vocab, oovs)


def greedy_decode_batch(
    model,
    vocab: Vocabulary,
    sources: list[list[str]],
    max_len: int = 32,
    alpha_override: float | None = None,
) -> list[list[str]]:
    """Greedy decoding over a whole batch in lockstep.

    Sources are right-padded; rows that emit EOS keep feeding PAD but their
    output is frozen. Produces exactly what per-example greedy would.
    """
    if not sources:
        return []
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    batch = len(sources)
    encoded = [vocab.encode_extended(toks) for toks in sources]
    s_max = max(len(ids) for ids, _, _ in encoded)
    src_ids = np.zeros((batch, s_max), dtype=np.int64)
    src_ext = np.zeros((batch, s_max), dtype=np.int64)
    mask = np.zeros((batch, s_max), dtype=np.float64)
    for row, (ids, ext, _) in enumerate(encoded):
        src_ids[row, : len(ids)] = ids
        src_ext[row, : len(ids)] = ext
        mask[row, : len(ids)] = 1.0
    n_oov = max(len(oovs) for _, _, oovs in encoded)

    was_training = model.training
    model.eval()
    try:
        with no_grad():
            session = model.start_decode(
                src_ids, src_ext, n_oov, alpha_override, src_mask=mask
            )
            prev = np.full(batch, BOS, dtype=np.int64)
            done = np.zeros(batch, dtype=bool)
            outs: list[list[int]] = [[] for _ in range(batch)]
            for _ in range(max_len):
                dist, session = model.step_decode(session, prev)
                nxt = np.argmax(dist, axis=-1)
                for row in range(batch):
                    if done[row]:
                        continue
                    if nxt[row] == EOS:
                        done[row] = True
                    else:
                        outs[row].append(int(nxt[row]))
                if done.all():
                    break
                feed = np.where(nxt < len(vocab), nxt, UNK)
                prev = np.where(done, PAD, feed).astype(np.int64)
    finally:
        model.train(was_training)
    return [
        _to_surfaces(outs[row], vocab, encoded[row][2]) for row in range(batch)
    ]


def beam_decode(
    model,
    vocab: Vocabulary,
    source: list[str],
    max_len: int = 32,
    beam_width: int = 4,
    alpha_override: float | None = None,
) -> list[str]:
    """Beam search pruned by cumulative log-probability; the returned
    hypothesis maximizes length-normalized log-probability. Width 1
    reproduces greedy decoding exactly."""
    if max_len < 1 or beam_width < 1:
        raise ValueError(f"need max_len >= 1 and beam_width >= 1, got {max_len}, {beam_width}")
    was_training = model.training
    model.eval()
    finished: list[tuple[float, list[int]]] = []
    try:
        with no_grad():
            session, oovs = _prepare(model, vocab, source, alpha_override)
            # (cumulative logp, ids so far, next input id, session)
            beams = [(0.0, [], BOS, session)]
            for _ in range(max_len):
                candidates = []
                for logp, ids, prev, sess in beams:
                    dist, sess2 = model.step_decode(sess, prev)
                    logs = np.log(np.maximum(dist[0], 1e-30))
                    top = np.argsort(-logs, kind="stable")[: beam_width + 1]
                    for token in top:
                        candidates.append(
                            (logp + float(logs[token]), ids + [int(token)], sess2)
                        )
                candidates.sort(key=lambda c: (-c[0], c[1]))
                beams = []
                for logp, ids, sess in candidates:
                    if ids[-1] == EOS:
                        finished.append((logp / len(ids), ids[:-1]))
                    elif len(beams) < beam_width:
                        prev = ids[-1] if ids[-1] < len(vocab) else UNK
                        beams.append((logp, ids, prev, sess))
                    if len(beams) == beam_width:
                        break
                if not beams:
                    break
            for logp, ids, _, _ in beams:
                if ids:
                    finished.append((logp / len(ids), ids))
            finished.sort(key=lambda c: (-c[0], c[1]))
    finally:
        model.train(was_training)
    return _to_surfaces(finished[0][1], vocab, oovs) if finished else []
