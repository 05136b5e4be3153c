"""Compact encoder-decoder transformer with an optional grafted copy head.

The generation path is a standard post-norm transformer. A CopyHead is a
single cross-attention head (W_q, W_k, W_v blocks plus a mixture gate)
bolted on after pretraining; its projections start from the mean of the
last decoder layer's cross-attention heads so the copy distribution
begins life as a sensible attention pattern rather than noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from rephrasekit.models.base import MixtureDistribution, Model
from rephrasekit.models.layers import (
    FeedForward,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    NEG_INF,
    additive_source_mask,
    causal_mask,
    dropout,
)
from rephrasekit.numcore import tensor as nt
from rephrasekit.numcore.tensor import ShapeError, Tensor


@dataclass
class TransformerConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    max_len: int = 80
    dropout: float = 0.1
    dtype: str = "float64"


class EncoderLayer:
    def __init__(self, store, name: str, cfg: TransformerConfig):
        self.attn = MultiHeadAttention(store, f"{name}.self", cfg.d_model, cfg.n_heads)
        self.ln1 = LayerNorm(store, f"{name}.ln1", cfg.d_model)
        self.ff = FeedForward(store, f"{name}.ff", cfg.d_model, cfg.d_ff)
        self.ln2 = LayerNorm(store, f"{name}.ln2", cfg.d_model)

    def __call__(self, model: Model, x: Tensor, mask, p: float) -> Tensor:
        x = self.ln1(x + dropout(model, self.attn(x, x, mask), p))
        return self.ln2(x + dropout(model, self.ff(x), p))


class DecoderLayer:
    def __init__(self, store, name: str, cfg: TransformerConfig):
        self.self_attn = MultiHeadAttention(store, f"{name}.self", cfg.d_model, cfg.n_heads)
        self.ln1 = LayerNorm(store, f"{name}.ln1", cfg.d_model)
        self.cross_attn = MultiHeadAttention(store, f"{name}.cross", cfg.d_model, cfg.n_heads)
        self.ln2 = LayerNorm(store, f"{name}.ln2", cfg.d_model)
        self.ff = FeedForward(store, f"{name}.ff", cfg.d_model, cfg.d_ff)
        self.ln3 = LayerNorm(store, f"{name}.ln3", cfg.d_model)

    def __call__(self, model, x, h_e, self_mask, cross_mask, p: float) -> Tensor:
        x = self.ln1(x + dropout(model, self.self_attn(x, x, self_mask), p))
        x = self.ln2(x + dropout(model, self.cross_attn(x, h_e, cross_mask), p))
        return self.ln3(x + dropout(model, self.ff(x), p))


class CopyHead:
    """One attention head dedicated to copying, plus its mixture gate."""

    def __init__(self, store, d_model: int, d_head: int):
        self.d_head = d_head
        self.wq = store.param("copy_head.wq", (d_model, d_head), "glorot")
        self.wk = store.param("copy_head.wk", (d_model, d_head), "glorot")
        self.wv = store.param("copy_head.wv", (d_model, d_head), "glorot")
        self.mix = Linear(store, "copy_head.mix", d_head + d_model, 1)


class MiniTransformer(Model):
    arch = "mini-transformer"

    def __init__(self, config: TransformerConfig, seed: int = 0):
        super().__init__(seed, dtype=np.dtype(config.dtype))
        self.config = config
        store = self.store
        self.emb = store.param("emb", (config.vocab_size, config.d_model), "embedding")
        self.pos = store.param("pos", (config.max_len, config.d_model), "embedding")
        self.enc_layers = [
            EncoderLayer(store, f"enc{i}", config) for i in range(config.n_layers)
        ]
        self.dec_layers = [
            DecoderLayer(store, f"dec{i}", config) for i in range(config.n_layers)
        ]
        self.out = Linear(store, "out", config.d_model, config.vocab_size)
        self.copy_head: CopyHead | None = None

    def config_dict(self) -> dict:
        return {
            "arch": self.arch,
            "has_copy_head": self.copy_head is not None,
            **asdict(self.config),
        }

    # ------------------------------------------------------------------
    def _embed(self, ids: np.ndarray) -> Tensor:
        ids = np.atleast_2d(np.asarray(ids))
        if ids.shape[1] > self.config.max_len:
            raise ShapeError(
                f"sequence length {ids.shape[1]} exceeds positional table {self.config.max_len}"
            )
        x = nt.embedding(self.emb, ids)
        p = nt.embedding(self.pos, np.arange(ids.shape[1]))
        return x + nt.reshape(p, (1, ids.shape[1], self.config.d_model))

    def encode(self, src_ids: np.ndarray, src_mask: np.ndarray | None = None) -> Tensor:
        src_ids = np.atleast_2d(np.asarray(src_ids))
        if src_ids.shape[1] == 0:
            raise ShapeError(f"encode: empty source, shape {src_ids.shape}")
        x = dropout(self, self._embed(src_ids), self.config.dropout)
        add = None if src_mask is None else additive_source_mask(src_mask)
        for layer in self.enc_layers:
            x = layer(self, x, add, self.config.dropout)
        return x

    def decode_states(
        self, tgt_in: np.ndarray, h_e: Tensor, src_mask: np.ndarray | None = None
    ) -> Tensor:
        tgt_in = np.atleast_2d(np.asarray(tgt_in))
        x = dropout(self, self._embed(tgt_in), self.config.dropout)
        self_mask = causal_mask(tgt_in.shape[1])
        cross = None if src_mask is None else additive_source_mask(src_mask)
        for layer in self.dec_layers:
            x = layer(self, x, h_e, self_mask, cross, self.config.dropout)
        return x

    def forward_logits(
        self, src_ids: np.ndarray, src_mask: np.ndarray | None, tgt_in: np.ndarray
    ) -> Tensor:
        """(B, T, vocab) generation logits; the pretraining path."""
        h_e = self.encode(src_ids, src_mask)
        h_d = self.decode_states(tgt_in, h_e, src_mask)
        return self.out(h_d)

    # ------------------------------------------------------------------
    def forward_mixtures(
        self,
        src_ids: np.ndarray,
        src_ext: np.ndarray,
        src_mask: np.ndarray | None,
        tgt_in: np.ndarray,
        n_oov: int,
        alpha_override: float | None = None,
    ) -> MixtureDistribution:
        """Teacher-forced mixture over all steps at once, (B, T, ·)."""
        src_ids = np.atleast_2d(np.asarray(src_ids))
        src_ext = np.atleast_2d(np.asarray(src_ext))
        tgt_in = np.atleast_2d(np.asarray(tgt_in))
        h_e = self.encode(src_ids, src_mask)
        h_d = self.decode_states(tgt_in, h_e, src_mask)
        p_vocab = nt.softmax(self.out(h_d), axis=-1)
        batch, t_len, _ = h_d.shape
        s_len = src_ids.shape[1]
        dtype = h_d.data.dtype

        if self.copy_head is None:
            # Pure generation: degenerate mixture with no copy mass.
            uniform = nt.constant(np.full((batch, t_len, s_len), 1.0 / s_len, dtype=dtype))
            alpha = nt.constant(np.zeros((batch, t_len, 1), dtype=dtype))
            zeros = nt.constant(np.zeros((batch, t_len, n_oov), dtype=dtype))
            return MixtureDistribution(
                p_vocab, uniform, alpha, nt.concat([p_vocab, zeros], axis=-1)
            )

        head = self.copy_head
        q = nt.matmul(h_d, head.wq)
        k = nt.matmul(h_e, head.wk)
        v = nt.matmul(h_e, head.wv)
        scores = nt.matmul(q, nt.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(head.d_head))
        if src_mask is not None:
            scores = scores + nt.constant(
                ((1.0 - src_mask) * NEG_INF)[:, None, :].astype(dtype)
            )
        p_copy = nt.softmax(scores, axis=-1)
        context = nt.matmul(p_copy, v)
        if alpha_override is None:
            alpha = nt.sigmoid(head.mix(nt.concat([context, h_d], axis=-1)))
        else:
            alpha = nt.constant(np.full((batch, t_len, 1), float(alpha_override), dtype=dtype))
        zeros = nt.constant(np.zeros((batch, t_len, n_oov), dtype=dtype))
        base = nt.concat([p_vocab * (1.0 - alpha), zeros], axis=-1)
        ids = np.broadcast_to(src_ext[:, None, :], (batch, t_len, s_len))
        p_output = nt.scatter_add_last(base, np.ascontiguousarray(ids), p_copy * alpha)
        return MixtureDistribution(p_vocab, p_copy, alpha, p_output)

    # decoding protocol -------------------------------------------------
    def start_decode(self, src_ids, src_ext, n_oov: int, alpha_override=None, src_mask=None):
        src_ids = np.atleast_2d(np.asarray(src_ids))
        return {
            "src_ids": src_ids,
            "src_ext": np.atleast_2d(np.asarray(src_ext)),
            "src_mask": src_mask,
            "n_oov": int(n_oov),
            "alpha": alpha_override,
            "prefix": np.zeros((src_ids.shape[0], 0), dtype=np.int64),
        }

    def step_decode(self, session, prev_ids):
        """prev_ids is scalar or (B,); the target prefix is re-run each step.

        Returns ((B, vocab+oov) probabilities for the next token, session).
        """
        prev = np.atleast_1d(np.asarray(prev_ids, dtype=np.int64))
        prefix = np.concatenate([session["prefix"], prev[:, None]], axis=1)
        dist = self.forward_mixtures(
            session["src_ids"], session["src_ext"], session["src_mask"], prefix,
            session["n_oov"], session["alpha"],
        )
        new_session = dict(session, prefix=prefix)
        return dist.p_output.data[:, -1], new_session


def copy_head_init(model: MiniTransformer) -> CopyHead:
    """Graft a copy head whose W_q/W_k/W_v are the elementwise mean of the
    last decoder layer's cross-attention head blocks; the gate is fresh."""
    if not model.dec_layers:
        raise ValueError("model has no decoder cross-attention to initialize from")
    if model.copy_head is not None:
        raise ValueError("model already has a copy head")
    cross = model.dec_layers[-1].cross_attn
    d_head, n_heads = cross.d_head, cross.n_heads
    head = CopyHead(model.store, model.config.d_model, d_head)
    for target, source in ((head.wq, cross.wq), (head.wk, cross.wk), (head.wv, cross.wv)):
        blocks = [
            source.data[:, h * d_head : (h + 1) * d_head] for h in range(n_heads)
        ]
        target.data = np.mean(blocks, axis=0).astype(model.dtype)
    model.copy_head = head
    return head
