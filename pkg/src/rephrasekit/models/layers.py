"""Reusable layers: linear, masked LSTM, multi-head attention, layer norm."""

from __future__ import annotations

import numpy as np

from rephrasekit.models.base import Model, ParamStore
from rephrasekit.numcore import tensor as nt
from rephrasekit.numcore.tensor import Tensor

NEG_INF = -1e9


class Linear:
    """y = x W^T + b with W of shape (out_dim, in_dim)."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, bias: bool = True):
        self.w = store.param(f"{name}.w", (out_dim, in_dim), "glorot")
        self.b = store.param(f"{name}.b", (out_dim,), "zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = nt.matmul(x, nt.transpose(self.w))
        return y if self.b is None else y + self.b


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int, eps: float = 1e-5):
        self.gamma = store.param(f"{name}.gamma", (dim,), "ones")
        self.beta = store.param(f"{name}.beta", (dim,), "zeros")
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = nt.mean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = nt.mean(centered * centered, axis=-1, keepdims=True)
        inv = (var + self.eps) ** -0.5
        return centered * inv * self.gamma + self.beta


def dropout(model: Model, x: Tensor, p: float) -> Tensor:
    """Model-owned dropout: active only in training mode."""
    if not model.training or p == 0.0:
        return x
    return nt.dropout(x, p, model.dropout_rng)


class LstmLayer:
    """Single-direction LSTM over (B, S, in); padding positions hold state.

    The mask blend h = m·h_new + (1−m)·h_prev keeps padded steps from
    disturbing carried state, which makes reversed runs over right-padded
    batches correct.
    """

    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int):
        self.hidden = hidden
        self.wx = store.param(f"{name}.wx", (4 * hidden, in_dim), "glorot")
        self.wh = store.param(f"{name}.wh", (4 * hidden, hidden), "glorot")
        self.b = store.param(f"{name}.b", (4 * hidden,), "forget_one")

    def step(
        self, x_t: Tensor, h: Tensor, c: Tensor, mask_t: np.ndarray | None = None
    ) -> tuple[Tensor, Tensor]:
        pre = nt.matmul(x_t, nt.transpose(self.wx)) + nt.matmul(h, nt.transpose(self.wh)) + self.b
        h_new, c_new = nt.lstm_gates(pre, c)
        if mask_t is not None:
            m = mask_t.reshape(-1, 1).astype(h_new.data.dtype)
            keep = nt.constant(m)
            drop = nt.constant(1.0 - m)
            h_new = h_new * keep + h * drop
            c_new = c_new * keep + c * drop
        return h_new, c_new

    def run(
        self,
        xs: Tensor,
        mask: np.ndarray | None = None,
        reverse: bool = False,
        h0: Tensor | None = None,
        c0: Tensor | None = None,
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (outputs (B,S,H), final h, final c)."""
        batch, length, _ = xs.shape
        dtype = xs.data.dtype
        h = h0 if h0 is not None else nt.constant(np.zeros((batch, self.hidden), dtype=dtype))
        c = c0 if c0 is not None else nt.constant(np.zeros((batch, self.hidden), dtype=dtype))
        steps = range(length - 1, -1, -1) if reverse else range(length)
        outs: list[Tensor] = [None] * length  # type: ignore[list-item]
        for t in steps:
            x_t = nt.narrow(xs, 1, t, 1).reshape((batch, xs.shape[2]))
            m_t = None if mask is None else mask[:, t]
            h, c = self.step(x_t, h, c, m_t)
            outs[t] = nt.reshape(h, (batch, 1, self.hidden))
        return nt.concat(outs, axis=1), h, c


class MultiHeadAttention:
    """Standard scaled dot-product attention with d_model = heads × d_head.

    Head h reads columns [h·d_head, (h+1)·d_head) of each projection, so
    per-head weight blocks are directly addressable for copy-head grafting.
    """

    def __init__(self, store: ParamStore, name: str, d_model: int, n_heads: int):
        if d_model % n_heads:
            raise ValueError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = store.param(f"{name}.wq", (d_model, d_model), "glorot")
        self.wk = store.param(f"{name}.wk", (d_model, d_model), "glorot")
        self.wv = store.param(f"{name}.wv", (d_model, d_model), "glorot")
        self.wo = store.param(f"{name}.wo", (d_model, d_model), "glorot")

    def _split(self, x: Tensor, batch: int, length: int) -> Tensor:
        x = nt.reshape(x, (batch, length, self.n_heads, self.d_head))
        return nt.transpose(x, (0, 2, 1, 3))

    def __call__(self, query: Tensor, keyval: Tensor, mask: np.ndarray | None = None) -> Tensor:
        """mask is additive, broadcastable to (B, heads, Tq, Tk)."""
        b, tq, _ = query.shape
        tk = keyval.shape[1]
        q = self._split(nt.matmul(query, self.wq), b, tq)
        k = self._split(nt.matmul(keyval, self.wk), b, tk)
        v = self._split(nt.matmul(keyval, self.wv), b, tk)
        scores = nt.matmul(q, nt.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = scores + nt.constant(mask.astype(query.data.dtype))
        attn = nt.softmax(scores, axis=-1)
        mixed = nt.matmul(attn, v)
        mixed = nt.reshape(nt.transpose(mixed, (0, 2, 1, 3)), (b, tq, self.d_model))
        return nt.matmul(mixed, self.wo)


class FeedForward:
    def __init__(self, store: ParamStore, name: str, d_model: int, d_ff: int):
        self.lin1 = Linear(store, f"{name}.lin1", d_model, d_ff)
        self.lin2 = Linear(store, f"{name}.lin2", d_ff, d_model)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(nt.relu(self.lin1(x)))


def padding_mask(lengths: np.ndarray, max_len: int) -> np.ndarray:
    """(B, S) float mask: 1 on real tokens, 0 on padding."""
    return (np.arange(max_len)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)


def additive_source_mask(mask: np.ndarray) -> np.ndarray:
    """(B, S) 0/1 mask -> additive (B, 1, 1, S) with NEG_INF on padding."""
    return ((1.0 - mask) * NEG_INF)[:, None, None, :]


def causal_mask(length: int) -> np.ndarray:
    """(1, 1, T, T) additive mask hiding future positions."""
    upper = np.triu(np.ones((length, length)), k=1)
    return (upper * NEG_INF)[None, None]
