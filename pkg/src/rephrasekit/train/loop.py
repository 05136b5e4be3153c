"""Training loops: teacher-forced MLE with optional copy hinge, denoising
pretraining, and copy-head fine-tuning.

All loops are deterministic given the config seed: the shuffle stream is
seeded from it, model dropout is reseeded at entry, and validation runs
under the eval flag. Checkpoint selection scans validation exact match
from epoch 0 (the untrained or incoming weights) onward, so a fine-tune
can never return weights worse than what it started from.
"""

from __future__ import annotations

import json
import time

import numpy as np

from rephrasekit import numcore as nt
from rephrasekit.corpus import Dataset
from rephrasekit.metrics import em_any as _em_any_fn
from rephrasekit.metrics import exact_match as _em_fn
from rephrasekit.models.decoding import beam_decode, greedy_decode_batch
from rephrasekit.models.denoise import DenoisePolicy, denoise_corrupt
from rephrasekit.models.transformer import MiniTransformer, copy_head_init
from rephrasekit.models.vocab import BOS, EOS, UNK, Vocabulary
from rephrasekit.numcore.optim import Adam, clip_global_norm
from rephrasekit.numcore.tensor import no_grad
from rephrasekit.train.config import CopyLossConfig, TrainConfig
from rephrasekit.train.losses import copy_hinge_loss, nll_loss


class DivergenceError(RuntimeError):
    """Raised when training hits a non-finite loss and cannot recover."""


def encode_pair(vocab: Vocabulary, source: list[str], target: list[str]) -> dict:
    """Numeric views of one (source, target) pair.

    ``src_ids``/``src_ext`` index the in-vocab and extended streams,
    ``tgt_in`` is BOS + target with OOVs collapsed to UNK (the decoder
    input can only embed real vocab ids), ``tgt_out`` is the extended
    target + EOS, which is what the mixture must assign mass to.
    """
    src_ids, src_ext, oovs = vocab.encode_extended(source)
    tgt_ext = vocab.encode_target_extended(target, oovs)
    tgt_plain = [t if t < len(vocab) else UNK for t in tgt_ext]
    return {
        "src_ids": src_ids,
        "src_ext": src_ext,
        "oovs": oovs,
        "tgt_in": [BOS] + tgt_plain,
        "tgt_out": tgt_ext + [EOS],
    }


def _collate(items: list[dict]) -> dict:
    """Right-pad a list of encode_pair dicts into batch arrays."""
    batch = len(items)
    s_max = max(len(it["src_ids"]) for it in items)
    t_max = max(len(it["tgt_in"]) for it in items)
    src_ids = np.zeros((batch, s_max), dtype=np.int64)
    src_ext = np.zeros((batch, s_max), dtype=np.int64)
    src_mask = np.zeros((batch, s_max), dtype=np.float64)
    tgt_in = np.zeros((batch, t_max), dtype=np.int64)
    tgt_out = np.zeros((batch, t_max), dtype=np.int64)
    tgt_mask = np.zeros((batch, t_max), dtype=np.float64)
    for row, it in enumerate(items):
        s, t = len(it["src_ids"]), len(it["tgt_in"])
        src_ids[row, :s] = it["src_ids"]
        src_ext[row, :s] = it["src_ext"]
        src_mask[row, :s] = 1.0
        tgt_in[row, :t] = it["tgt_in"]
        tgt_out[row, :t] = it["tgt_out"]
        tgt_mask[row, :t] = 1.0
    return {
        "src_ids": src_ids,
        "src_ext": src_ext,
        "src_mask": src_mask,
        "tgt_in": tgt_in,
        "tgt_out": tgt_out,
        "tgt_mask": tgt_mask,
        "n_oov": max(len(it["oovs"]) for it in items),
    }


def _batch_loss(model, batch: dict, copy_cfg: CopyLossConfig | None, alpha_override):
    """Masked-mean NLL plus (when configured) the per-token hinge mean."""
    dist = model.forward_mixtures(
        batch["src_ids"], batch["src_ext"], batch["src_mask"],
        batch["tgt_in"], batch["n_oov"], alpha_override,
    )
    loss = nll_loss(dist, batch["tgt_out"], batch["tgt_mask"])
    if copy_cfg is not None and copy_cfg.hinge_lambda > 0.0:
        hinge = copy_hinge_loss(
            dist, batch["tgt_out"], batch["src_ext"], batch["tgt_mask"], copy_cfg
        )
        loss = loss + hinge * (1.0 / float(batch["tgt_mask"].sum()))
    return loss


def _self_feed_inputs(model, batch: dict, alpha_override) -> np.ndarray:
    """Replace gold decoder inputs with the model's own argmax history.

    One teacher-forced pass under no_grad yields per-step argmax tokens;
    those (shifted right, OOVs collapsed to UNK) become the decoder input
    for the gradient pass. An approximation of sampled decoding that keeps
    the loss a single graph.
    """
    with no_grad():
        dist = model.forward_mixtures(
            batch["src_ids"], batch["src_ext"], batch["src_mask"],
            batch["tgt_in"], batch["n_oov"], alpha_override,
        )
    pred = np.argmax(dist.p_output.data, axis=-1)
    pred = np.where(pred < dist.p_vocab.data.shape[-1], pred, UNK)
    fed = batch["tgt_in"].copy()
    fed[:, 1:] = pred[:, :-1]
    return fed


def _minibatches(encoded: list[dict], order: np.ndarray, batch_size: int):
    for lo in range(0, len(order), batch_size):
        yield _collate([encoded[i] for i in order[lo : lo + batch_size]])


def _valid_eval(model, vocab, valid_pairs, valid_utts, cfg, copy_cfg, alpha_override):
    """(exact match, exact match vs any reference, teacher-forced loss)."""
    preds = greedy_decode_batch(
        model, vocab, [src for src, _ in valid_pairs],
        max_len=cfg.max_decode_len, alpha_override=alpha_override,
    )
    em = float(np.mean([_em_fn(p, u) for p, u in zip(preds, valid_utts)]))
    emany = float(np.mean([_em_any_fn(p, u) for p, u in zip(preds, valid_utts)]))
    encoded = [encode_pair(vocab, s, t) for s, t in valid_pairs]
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    try:
        with no_grad():
            order = np.arange(len(encoded))
            for batch in _minibatches(encoded, order, cfg.batch_size):
                n_tok = int(batch["tgt_mask"].sum())
                loss = _batch_loss(model, batch, copy_cfg, alpha_override)
                total += float(loss.data) * n_tok
                count += n_tok
    finally:
        model.train(was_training)
    return em, emany, total / max(count, 1)


def _snapshot(model) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in model.store.state_dict().items()}


def train_seq2seq(
    model,
    vocab: Vocabulary,
    train_ds: Dataset,
    valid_ds: Dataset,
    cfg: TrainConfig,
    copy_cfg: CopyLossConfig | None = None,
    alpha_override: float | None = None,
    log_path: str | None = None,
):
    """Teacher-forced training with Adam, returning (model, log records).

    The model is left holding the weights of the epoch with the best
    validation exact match (ties broken by lower validation loss), with
    epoch 0 (the incoming weights) included in the scan. A non-finite
    training loss aborts the run and restores that best checkpoint.
    """
    rng = np.random.default_rng(cfg.seed)
    model.reseed_dropout(cfg.seed)
    train_pairs = train_ds.pairs(normalized=True)
    valid_pairs = valid_ds.pairs(normalized=True)
    valid_utts = list(valid_ds)
    encoded = [encode_pair(vocab, s, t) for s, t in train_pairs]
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    log: list[dict] = []
    t0 = time.monotonic()

    def record(rec: dict) -> None:
        log.append(rec)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")

    em, emany, vloss = _valid_eval(
        model, vocab, valid_pairs, valid_utts, cfg, copy_cfg, alpha_override
    )
    best = _snapshot(model)
    best_em, best_vloss = em, vloss
    record({
        "epoch": 0, "train_loss": None, "valid_em": em, "valid_em_any": emany,
        "valid_loss": vloss, "wall_time": time.monotonic() - t0,
    })
    diverged = False
    stop = cfg.early_stop_valid_em is not None and em >= cfg.early_stop_valid_em

    for epoch in range(1, cfg.epochs + 1):
        if stop or diverged:
            break
        model.train()
        order = rng.permutation(len(encoded))
        total, count = 0.0, 0
        for batch in _minibatches(encoded, order, cfg.batch_size):
            if not cfg.teacher_forcing:
                batch = dict(batch, tgt_in=_self_feed_inputs(model, batch, alpha_override))
            loss = _batch_loss(model, batch, copy_cfg, alpha_override)
            if not np.isfinite(loss.data):
                diverged = True
                break
            loss.backward()
            clip_global_norm(params, cfg.clip_norm)
            opt.step()
            n_tok = int(batch["tgt_mask"].sum())
            total += float(loss.data) * n_tok
            count += n_tok
        if diverged:
            record({"epoch": epoch, "diverged": True,
                    "wall_time": time.monotonic() - t0})
            break
        em, emany, vloss = _valid_eval(
            model, vocab, valid_pairs, valid_utts, cfg, copy_cfg, alpha_override
        )
        if em > best_em or (em == best_em and vloss < best_vloss):
            best = _snapshot(model)
            best_em, best_vloss = em, vloss
        record({
            "epoch": epoch, "train_loss": total / max(count, 1), "valid_em": em,
            "valid_em_any": emany, "valid_loss": vloss,
            "wall_time": time.monotonic() - t0,
        })
        if cfg.early_stop_valid_em is not None and em >= cfg.early_stop_valid_em:
            stop = True

    model.store.load_state_dict(best)
    model.eval()
    return model, log


def pretrain_denoising(
    model: MiniTransformer,
    vocab: Vocabulary,
    streams: list[list[str]],
    cfg: TrainConfig,
    policy: DenoisePolicy | None = None,
    log_path: str | None = None,
):
    """Span-infilling pretraining: reconstruct each stream from its
    corrupted form under plain cross-entropy. Corruption is re-sampled
    every epoch from a seed derived from (config seed, epoch, index)."""
    if policy is None:
        policy = DenoisePolicy()
    if not streams:
        raise ValueError("pretraining needs at least one token stream")
    rng = np.random.default_rng(cfg.seed)
    model.reseed_dropout(cfg.seed)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    log: list[dict] = []
    t0 = time.monotonic()

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        encoded = []
        for idx, toks in enumerate(streams):
            seed = (cfg.seed * 1_000_003 + epoch * 9_176 + idx) % (2**31 - 1)
            corrupted, original = denoise_corrupt(toks, policy, seed=seed)
            ids = vocab.encode(original)
            encoded.append({
                "src_ids": vocab.encode(corrupted),
                "src_ext": vocab.encode(corrupted),
                "oovs": [],
                "tgt_in": [BOS] + ids,
                "tgt_out": ids + [EOS],
            })
        order = rng.permutation(len(encoded))
        total, count = 0.0, 0
        for batch in _minibatches(encoded, order, cfg.batch_size):
            logits = model.forward_logits(
                batch["src_ids"], batch["src_mask"], batch["tgt_in"]
            )
            ce = nt.cross_entropy(logits, batch["tgt_out"])
            mask = nt.constant(batch["tgt_mask"])
            loss = (ce * mask).sum() * (1.0 / float(batch["tgt_mask"].sum()))
            if not np.isfinite(loss.data):
                raise DivergenceError(f"non-finite pretraining loss at epoch {epoch}")
            loss.backward()
            clip_global_norm(params, cfg.clip_norm)
            opt.step()
            n_tok = int(batch["tgt_mask"].sum())
            total += float(loss.data) * n_tok
            count += n_tok
        rec = {"epoch": epoch, "train_loss": total / max(count, 1),
               "wall_time": time.monotonic() - t0}
        log.append(rec)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")
    model.eval()
    return model, log


def finetune_with_copy(
    model: MiniTransformer,
    vocab: Vocabulary,
    train_ds: Dataset,
    valid_ds: Dataset,
    cfg: TrainConfig,
    copy_cfg: CopyLossConfig | None = None,
    alpha_override: float | None = None,
    log_path: str | None = None,
):
    """Graft a copy head onto a pretrained generator, then fine-tune.

    The head's projections start as the mean of the last decoder layer's
    cross-attention heads; the mixture gate starts fresh. The model must
    not already carry a head.
    """
    if model.copy_head is not None:
        raise ValueError("model already has a copy head; fine-tune directly")
    copy_head_init(model)
    return train_seq2seq(
        model, vocab, train_ds, valid_ds, cfg,
        copy_cfg=copy_cfg, alpha_override=alpha_override, log_path=log_path,
    )


def predict_dataset(
    model,
    vocab: Vocabulary,
    dataset: Dataset,
    decode: str = "greedy",
    beam_width: int = 4,
    max_len: int = 32,
    alpha_override: float | None = None,
) -> dict[str, list[str]]:
    """Decode every utterance's content span; returns id -> token list."""
    sources = [src for src, _ in dataset.pairs(normalized=True)]
    if decode == "greedy":
        outs = greedy_decode_batch(
            model, vocab, sources, max_len=max_len, alpha_override=alpha_override
        )
    elif decode == "beam":
        outs = [
            beam_decode(model, vocab, src, max_len=max_len,
                        beam_width=beam_width, alpha_override=alpha_override)
            for src in sources
        ]
    else:
        raise ValueError(f"unknown decode strategy {decode!r}")
    return {u.id: out for u, out in zip(dataset, outs)}
