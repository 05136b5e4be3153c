"""Linear-chain CRF and the edit tagger built on the mini encoder.

Tags factor as action × insertion: id = action·(P+1) + phrase_slot where
action 0 keeps and 1 deletes the token, phrase_slot 0 inserts nothing,
and slot k ≥ 1 inserts ranked phrase k−1 before the token. The tagger
appends an end-of-sequence position so a sequence of L source tokens
yields L+1 slots; the final slot may only keep (insertions before the
sentinel model appends after the last source token).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from rephrasekit.editops import EditAction, EditTag, PhraseVocabulary, TagSequence
from rephrasekit.models.base import Model
from rephrasekit.models.layers import Linear, NEG_INF, additive_source_mask, dropout
from rephrasekit.models.transformer import EncoderLayer, TransformerConfig
from rephrasekit.numcore import tensor as nt
from rephrasekit.numcore.tensor import ShapeError, Tensor


def _check_tags(gold: np.ndarray, n_tags: int) -> None:
    if gold.size and (gold.min() < 0 or gold.max() >= n_tags):
        raise ShapeError(f"tag ids in [{gold.min()}, {gold.max()}] outside 0..{n_tags - 1}")


def crf_loglik(
    emissions: Tensor,
    transitions: Tensor,
    gold: np.ndarray,
    start: Tensor | None = None,
    end: Tensor | None = None,
) -> Tensor:
    """Sum over the batch of score(gold) − logZ; differentiable throughout.

    emissions is (B, L, T) (a 2-D (L, T) input is treated as batch 1);
    logZ comes from the log-space forward recursion.
    """
    if emissions.ndim == 2:
        emissions = nt.reshape(emissions, (1,) + emissions.shape)
    gold = np.atleast_2d(np.asarray(gold))
    batch, length, n_tags = emissions.shape
    if gold.shape != (batch, length):
        raise ShapeError(f"gold tags {gold.shape} vs emissions {emissions.shape}")
    if transitions.shape != (n_tags, n_tags):
        raise ShapeError(f"transitions {transitions.shape} vs {n_tags} tags")
    _check_tags(gold, n_tags)
    dtype = emissions.data.dtype
    if start is None:
        start = nt.constant(np.zeros(n_tags, dtype=dtype))
    if end is None:
        end = nt.constant(np.zeros(n_tags, dtype=dtype))

    # gold path score; scalars are gathered from batch-tiled views
    emit_gold = nt.gather_last(emissions, gold).sum()
    start_tiled = nt.concat([nt.reshape(start, (1, n_tags))] * batch, axis=0)
    end_tiled = nt.concat([nt.reshape(end, (1, n_tags))] * batch, axis=0)
    score = (
        emit_gold
        + nt.gather_last(start_tiled, gold[:, 0]).sum()
        + nt.gather_last(end_tiled, gold[:, -1]).sum()
    )
    if length > 1:
        flat_ids = gold[:, :-1] * n_tags + gold[:, 1:]
        trans_tiled = nt.concat(
            [nt.reshape(transitions, (1, n_tags * n_tags))] * batch, axis=0
        )
        per_step = [
            nt.reshape(nt.gather_last(trans_tiled, flat_ids[:, t]), (batch, 1))
            for t in range(length - 1)
        ]
        score = score + nt.concat(per_step, axis=1).sum()

    # log partition by the forward recursion
    alpha = nt.reshape(start, (1, n_tags)) + nt.reshape(
        nt.narrow(emissions, 1, 0, 1), (batch, n_tags)
    )
    for t in range(1, length):
        emit_t = nt.reshape(nt.narrow(emissions, 1, t, 1), (batch, n_tags))
        inner = nt.reshape(alpha, (batch, n_tags, 1)) + nt.reshape(
            transitions, (1, n_tags, n_tags)
        )
        alpha = nt.logsumexp(inner, axis=1) + emit_t
    log_z = nt.logsumexp(alpha + nt.reshape(end, (1, n_tags)), axis=-1).sum()
    return score - log_z


def crf_viterbi(
    emissions: np.ndarray,
    transitions: np.ndarray,
    start: np.ndarray | None = None,
    end: np.ndarray | None = None,
) -> tuple[list[int], float]:
    """Highest-scoring tag sequence; ties go to the lowest tag id scanning
    left to right. Runs the max recursion backward so the forward
    backtrace can choose greedily (argmax picks the first maximum).
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2:
        raise ShapeError(f"viterbi expects (L, T) emissions, got {emissions.shape}")
    length, n_tags = emissions.shape
    if transitions.shape != (n_tags, n_tags):
        raise ShapeError(f"transitions {transitions.shape} vs {n_tags} tags")
    start = np.zeros(n_tags) if start is None else np.asarray(start, dtype=np.float64)
    end = np.zeros(n_tags) if end is None else np.asarray(end, dtype=np.float64)

    # beta[t, y] = best score of the suffix starting at t given tag y at t
    beta = np.empty((length, n_tags))
    beta[-1] = emissions[-1] + end
    for t in range(length - 2, -1, -1):
        beta[t] = emissions[t] + np.max(transitions + beta[t + 1][None, :], axis=1)
    first = int(np.argmax(start + beta[0]))
    path = [first]
    score = float(start[first] + beta[0][first])
    for t in range(1, length):
        prev = path[-1]
        path.append(int(np.argmax(transitions[prev] + beta[t])))
    return path, score


# ---------------------------------------------------------------------------
# tagger model


@dataclass
class CrfTaggerConfig:
    vocab_size: int
    n_phrases: int
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    mlp_hidden: int = 128
    max_len: int = 80
    dropout: float = 0.1
    dtype: str = "float64"

    @property
    def n_tags(self) -> int:
        return 2 * (self.n_phrases + 1)


class CrfTagger(Model):
    """Mini-encoder + one-layer MLP emissions + CRF over edit tags.

    Inputs must already carry the end-of-sequence sentinel, so a source
    of L tokens arrives as L+1 ids and produces L+1 tag slots.
    """

    arch = "crf-tagger"

    def __init__(self, config: CrfTaggerConfig, seed: int = 0):
        super().__init__(seed, dtype=np.dtype(config.dtype))
        self.config = config
        store = self.store
        enc_cfg = TransformerConfig(
            vocab_size=config.vocab_size,
            d_model=config.d_model,
            n_heads=config.n_heads,
            n_layers=config.n_layers,
            d_ff=config.d_ff,
            max_len=config.max_len,
            dropout=config.dropout,
            dtype=config.dtype,
        )
        self.emb = store.param("emb", (config.vocab_size, config.d_model), "embedding")
        self.pos = store.param("pos", (config.max_len, config.d_model), "embedding")
        self.enc_layers = [
            EncoderLayer(store, f"enc{i}", enc_cfg) for i in range(config.n_layers)
        ]
        self.mlp_in = Linear(store, "mlp_in", config.d_model, config.mlp_hidden)
        self.mlp_out = Linear(store, "mlp_out", config.mlp_hidden, config.n_tags)
        self.transitions = store.param("transitions", (config.n_tags, config.n_tags), "zeros")
        self.start = store.param("start", (config.n_tags,), "zeros")
        self.end = store.param("end", (config.n_tags,), "zeros")

    def config_dict(self) -> dict:
        return {"arch": self.arch, **asdict(self.config)}

    def emissions(self, src_ids: np.ndarray, src_mask: np.ndarray | None = None) -> Tensor:
        """(B, L+1, n_tags) scores with DELETE forbidden at each final slot."""
        src_ids = np.atleast_2d(np.asarray(src_ids))
        if src_ids.shape[1] == 0:
            raise ShapeError(f"emissions: empty input, shape {src_ids.shape}")
        if src_ids.shape[1] > self.config.max_len:
            raise ShapeError(
                f"length {src_ids.shape[1]} exceeds positional table {self.config.max_len}"
            )
        x = nt.embedding(self.emb, src_ids)
        p = nt.embedding(self.pos, np.arange(src_ids.shape[1]))
        x = dropout(self, x + nt.reshape(p, (1,) + p.shape), self.config.dropout)
        add = None if src_mask is None else additive_source_mask(src_mask)
        for layer in self.enc_layers:
            x = layer(self, x, add, self.config.dropout)
        scores = self.mlp_out(nt.relu(self.mlp_in(x)))
        forbid = np.zeros((src_ids.shape[0], src_ids.shape[1], self.config.n_tags))
        if src_mask is None:
            forbid[:, -1, self.config.n_phrases + 1 :] = NEG_INF
        else:
            last = np.asarray(src_mask).sum(axis=1).astype(int) - 1
            for b, pos_b in enumerate(last):
                forbid[b, pos_b, self.config.n_phrases + 1 :] = NEG_INF
        return scores + nt.constant(forbid.astype(scores.data.dtype))

    # tag id mapping ----------------------------------------------------
    def encode_tags(self, tags: TagSequence, phrases: PhraseVocabulary) -> list[int]:
        index = {tuple(p): i for i, p in enumerate(phrases.phrases)}
        ids = []
        for tag in tags.tags:
            slot = 0
            if tag.insert_before is not None:
                key = tuple(tag.insert_before)
                if key not in index:
                    raise ValueError(f"phrase {key} not in the phrase vocabulary")
                slot = index[key] + 1
            action = 0 if tag.action is EditAction.KEEP else 1
            ids.append(action * (self.config.n_phrases + 1) + slot)
        return ids

    def decode_tags(self, ids: list[int], phrases: PhraseVocabulary) -> TagSequence:
        width = self.config.n_phrases + 1
        tags = []
        for i in ids:
            action = EditAction.KEEP if i < width else EditAction.DELETE
            slot = i % width
            insert = tuple(phrases.phrases[slot - 1]) if slot else None
            tags.append(EditTag(action, insert))
        return TagSequence(tuple(tags))
