"""Pointer-generator seq2seq: bidirectional LSTM encoder, LSTM decoder,
copy attention, and a learned generate/copy mixture gate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from rephrasekit.models.base import MixtureDistribution, Model
from rephrasekit.models.layers import NEG_INF, Linear, LstmLayer, dropout
from rephrasekit.numcore import tensor as nt
from rephrasekit.numcore.tensor import ShapeError, Tensor


@dataclass
class PointerLstmConfig:
    vocab_size: int
    emb_dim: int = 128
    enc_hidden: int = 128
    enc_layers: int = 2
    dec_hidden: int = 256
    dec_layers: int = 2
    attn_dim: int = 128
    dropout: float = 0.3
    dtype: str = "float64"


class PointerGenLSTM(Model):
    arch = "pointer-lstm"

    def __init__(self, config: PointerLstmConfig, seed: int = 0):
        super().__init__(seed, dtype=np.dtype(config.dtype))
        self.config = config
        store = self.store
        self.emb = store.param("emb", (config.vocab_size, config.emb_dim), "embedding")
        self.enc_fwd: list[LstmLayer] = []
        self.enc_bwd: list[LstmLayer] = []
        for layer in range(config.enc_layers):
            in_dim = config.emb_dim if layer == 0 else 2 * config.enc_hidden
            self.enc_fwd.append(LstmLayer(store, f"enc{layer}.fwd", in_dim, config.enc_hidden))
            self.enc_bwd.append(LstmLayer(store, f"enc{layer}.bwd", in_dim, config.enc_hidden))
        self.dec: list[LstmLayer] = []
        for layer in range(config.dec_layers):
            in_dim = config.emb_dim if layer == 0 else config.dec_hidden
            self.dec.append(LstmLayer(store, f"dec{layer}", in_dim, config.dec_hidden))
        self.bridge_h = [
            Linear(store, f"bridge_h{layer}", 2 * config.enc_hidden, config.dec_hidden)
            for layer in range(config.dec_layers)
        ]
        self.bridge_c = [
            Linear(store, f"bridge_c{layer}", 2 * config.enc_hidden, config.dec_hidden)
            for layer in range(config.dec_layers)
        ]
        self.w_q = Linear(store, "w_q", config.dec_hidden, config.attn_dim, bias=False)
        self.w_k = Linear(store, "w_k", 2 * config.enc_hidden, config.attn_dim, bias=False)
        self.w_v = Linear(store, "w_v", 2 * config.enc_hidden, config.attn_dim, bias=False)
        self.w_mix = Linear(store, "w_mix", config.attn_dim + config.dec_hidden, 1)
        self.w_out = Linear(store, "w_out", config.dec_hidden + config.attn_dim, config.vocab_size)

    def config_dict(self) -> dict:
        return {"arch": self.arch, **asdict(self.config)}

    # ------------------------------------------------------------------
    def encode(self, src_ids: np.ndarray, src_mask: np.ndarray | None = None):
        """Run the encoder; returns (H_e, initial decoder state).

        src_ids is (B, S) int; src_mask is (B, S) with 1 on real tokens.
        """
        src_ids = np.atleast_2d(np.asarray(src_ids))
        if src_ids.shape[1] == 0:
            raise ShapeError(f"encode: empty source, shape {src_ids.shape}")
        x = dropout(self, nt.embedding(self.emb, src_ids), self.config.dropout)
        h_fwd = h_bwd = None
        for layer in range(self.config.enc_layers):
            fwd, h_fwd, _ = self.enc_fwd[layer].run(x, src_mask, reverse=False)
            bwd, h_bwd, _ = self.enc_bwd[layer].run(x, src_mask, reverse=True)
            x = nt.concat([fwd, bwd], axis=-1)
            if layer + 1 < self.config.enc_layers:
                x = dropout(self, x, self.config.dropout)
        h_e = x
        summary = nt.concat([h_fwd, h_bwd], axis=-1)
        state = [
            (nt.tanh(self.bridge_h[layer](summary)), nt.tanh(self.bridge_c[layer](summary)))
            for layer in range(self.config.dec_layers)
        ]
        return h_e, state

    def attention_pack(
        self,
        h_e: Tensor,
        src_ext: np.ndarray,
        src_mask: np.ndarray | None,
        n_oov: int,
    ) -> dict:
        """Precompute K/V projections and masks shared by all decode steps."""
        src_ext = np.atleast_2d(np.asarray(src_ext))
        add_mask = None
        if src_mask is not None:
            add_mask = ((1.0 - src_mask) * NEG_INF).astype(h_e.data.dtype)
        return {
            "k": self.w_k(h_e),
            "v": self.w_v(h_e),
            "src_ext": src_ext,
            "add_mask": add_mask,
            "n_oov": int(n_oov),
        }

    def decode_step(
        self,
        y_ids: np.ndarray,
        state: list[tuple[Tensor, Tensor]],
        pack: dict,
        alpha_override: float | None = None,
    ) -> tuple[MixtureDistribution, list[tuple[Tensor, Tensor]]]:
        """One teacher step: embed y, advance the stacked decoder, mix."""
        y_ids = np.asarray(y_ids).reshape(-1)
        x = dropout(self, nt.embedding(self.emb, y_ids), self.config.dropout)
        new_state = []
        for layer, cell in enumerate(self.dec):
            h, c = cell.step(x, state[layer][0], state[layer][1])
            new_state.append((h, c))
            x = dropout(self, h, self.config.dropout) if layer + 1 < len(self.dec) else h
        h_top = x
        dist = self._mixture(h_top, pack, alpha_override)
        return dist, new_state

    def _mixture(
        self, h_top: Tensor, pack: dict, alpha_override: float | None
    ) -> MixtureDistribution:
        batch = h_top.shape[0]
        k, v = pack["k"], pack["v"]
        q = self.w_q(h_top)
        scores = nt.reshape(nt.matmul(k, nt.reshape(q, (batch, self.config.attn_dim, 1))),
                            (batch, k.shape[1]))
        scores = scores * (1.0 / np.sqrt(self.config.attn_dim))
        if pack["add_mask"] is not None:
            scores = scores + nt.constant(pack["add_mask"])
        p_copy = nt.softmax(scores, axis=-1)
        context = nt.reshape(
            nt.matmul(nt.reshape(p_copy, (batch, 1, k.shape[1])), v),
            (batch, self.config.attn_dim),
        )
        if alpha_override is None:
            alpha = nt.sigmoid(self.w_mix(nt.concat([context, h_top], axis=-1)))
        else:
            alpha = nt.constant(
                np.full((batch, 1), float(alpha_override), dtype=h_top.data.dtype)
            )
        p_vocab = nt.softmax(self.w_out(nt.concat([h_top, context], axis=-1)), axis=-1)
        zeros = nt.constant(np.zeros((batch, pack["n_oov"]), dtype=h_top.data.dtype))
        base = nt.concat([p_vocab * (1.0 - alpha), zeros], axis=-1)
        p_output = nt.scatter_add_last(base, pack["src_ext"], p_copy * alpha)
        return MixtureDistribution(p_vocab, p_copy, alpha, p_output)

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
        """Teacher-forced pass; fields stacked to (B, T, ·)."""
        h_e, state = self.encode(src_ids, src_mask)
        pack = self.attention_pack(h_e, src_ext, src_mask, n_oov)
        steps: list[MixtureDistribution] = []
        for t in range(tgt_in.shape[1]):
            dist, state = self.decode_step(tgt_in[:, t], state, pack, alpha_override)
            steps.append(dist)
        return _stack_mixture(steps)

    # decoding protocol -------------------------------------------------
    def start_decode(self, src_ids, src_ext, n_oov: int, alpha_override=None, src_mask=None):
        h_e, state = self.encode(np.atleast_2d(src_ids), src_mask)
        pack = self.attention_pack(h_e, src_ext, src_mask, n_oov)
        return {"state": state, "pack": pack, "alpha": alpha_override}

    def step_decode(self, session, prev_ids):
        """prev_ids is scalar or (B,); returns ((B, vocab+oov) probs, session)."""
        dist, state = self.decode_step(
            np.atleast_1d(np.asarray(prev_ids)), session["state"], session["pack"],
            session["alpha"],
        )
        new_session = {"state": state, "pack": session["pack"], "alpha": session["alpha"]}
        return dist.p_output.data, new_session


def _stack_mixture(steps: list[MixtureDistribution]) -> MixtureDistribution:
    def stack(field: str) -> Tensor:
        parts = [
            nt.reshape(getattr(s, field), (s.p_vocab.shape[0], 1, getattr(s, field).shape[-1]))
            for s in steps
        ]
        return nt.concat(parts, axis=1)

    return MixtureDistribution(
        p_vocab=stack("p_vocab"),
        p_copy=stack("p_copy"),
        alpha_mix=stack("alpha_mix"),
        p_output=stack("p_output"),
    )
