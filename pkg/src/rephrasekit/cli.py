"""Command-line front end.

Subcommands cover the full workflow: synthesize or inspect data, train
any of the three architectures, pretrain and graft a copy head, distill,
sweep the hinge grid, decode predictions, and score them. Exit codes:
0 success, 1 usage error, 2 runtime failure. Every training command
writes its fully resolved configuration into the output directory before
touching the model so runs are reproducible from the artifacts alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from rephrasekit.corpus import (
    CorpusError,
    TsvColumns,
    compute_stats,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split,
)
from rephrasekit.editops import extract_phrases
from rephrasekit.metrics import MetricError, corpus_eval
from rephrasekit.models import (
    CrfTagger,
    CrfTaggerConfig,
    MiniTransformer,
    PointerGenLSTM,
    PointerLstmConfig,
    TransformerConfig,
    build_vocab,
    load_model,
    save_model,
)
from rephrasekit.models.denoise import DenoisePolicy
from rephrasekit.numcore.checkpoint import CheckpointError
from rephrasekit.text import normalize, surfaces
from rephrasekit.train import (
    CopyLossConfig,
    DistillConfig,
    DivergenceError,
    TrainConfig,
    distill,
    finetune_with_copy,
    grid_search,
    predict_dataset,
    predict_tagger,
    pretrain_denoising,
    train_seq2seq,
    train_tagger,
)

ARCHES = ("pointer-lstm", "mini-transformer", "tagger")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit(2)."""

    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared plumbing


def _load(path: str, fmt: str, tsv_columns: str | None):
    cols = TsvColumns.parse(tsv_columns) if tsv_columns else None
    return load_dataset(path, fmt=fmt, tsv_columns=cols)


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", default="jsonl", choices=("jsonl", "tsv"))
    p.add_argument("--tsv-columns", default=None,
                   help='e.g. "query=0,class=1,rephrases=2+"')


def _add_train_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--max-decode-len", type=int, default=None)
    p.add_argument("--early-stop-valid-em", type=float, default=None)
    p.add_argument("--vocab-size", type=int, default=None)


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"config root must be a JSON object: {path}")
    return cfg


_OVERRIDE_KEYS = (
    "epochs", "batch_size", "lr", "weight_decay", "seed",
    "clip_norm", "max_decode_len", "early_stop_valid_em",
)


def _resolve_train_config(args) -> tuple[TrainConfig, dict]:
    """Defaults <- config file <- command-line flags; returns the config
    and the raw file dict (for model/copy sections)."""
    raw = _read_config(args.config)
    merged = dict(raw.get("train", {}))
    for key in _OVERRIDE_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return TrainConfig.from_dict(merged), raw


def _resolve_copy_config(args, raw: dict) -> CopyLossConfig | None:
    section = dict(raw.get("copy", {}))
    lam = getattr(args, "hinge_lambda", None)
    if lam is not None:
        section["hinge_lambda"] = lam
    thr = getattr(args, "hinge_threshold", None)
    if thr is not None:
        section["threshold"] = thr
    if getattr(args, "hinge_on_alpha_only", False):
        section["hinge_on_alpha_only"] = True
    if not section:
        return None
    return CopyLossConfig.from_dict(section)


def _build_vocab(train_ds, args, raw: dict):
    pairs = train_ds.pairs(normalized=True)
    streams = [s for s, _ in pairs] + [t for _, t in pairs]
    max_size = args.vocab_size or raw.get("vocab_size", 8000)
    return build_vocab(streams, max_size=max_size)


def _make_model(arch: str, vocab_size: int, raw: dict, seed: int, n_phrases: int = 0):
    section = dict(raw.get("model", {}))
    section.pop("arch", None)
    if arch == "pointer-lstm":
        cfg = PointerLstmConfig(vocab_size=vocab_size, **section)
        return PointerGenLSTM(cfg, seed=seed)
    if arch == "mini-transformer":
        cfg = TransformerConfig(vocab_size=vocab_size, **section)
        return MiniTransformer(cfg, seed=seed)
    if arch == "tagger":
        cfg = CrfTaggerConfig(vocab_size=vocab_size, n_phrases=n_phrases, **section)
        return CrfTagger(cfg, seed=seed)
    raise UsageError(f"unknown architecture {arch!r}")


def _write_resolved(out_dir: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_decode(spec: str) -> tuple[str, int]:
    if spec == "greedy":
        return "greedy", 1
    if spec == "beam":
        return "beam", 4
    if spec.startswith("beam:"):
        width = int(spec.split(":", 1)[1])
        if width < 1:
            raise UsageError(f"beam width must be >= 1: {spec}")
        return "beam", width
    raise UsageError(f"decode must be 'greedy' or 'beam[:k]', got {spec!r}")


def _write_predictions(path: str, preds: dict[str, list[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for uid, toks in preds.items():
            fh.write(f"{uid}\t{' '.join(toks)}\n")


def _read_predictions(path: str) -> dict[str, list[str]]:
    preds: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'id<TAB>tokens'")
            uid, text = line.split("\t", 1)
            preds[uid] = text.split() if text else []
    return preds


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_data(args) -> int:
    ds = generate_synthetic(args.n, seed=args.seed)
    if args.splits:
        parts = [float(x) for x in args.splits.split(",")]
        if len(parts) != 3:
            raise UsageError(f"--splits needs three comma-separated ratios, got {args.splits!r}")
        os.makedirs(args.out, exist_ok=True)
        train, test, valid = split(ds, tuple(parts), seed=args.split_seed)
        for name, part in (("train", train), ("test", test), ("valid", valid)):
            save_dataset(part, os.path.join(args.out, f"{name}.jsonl"))
            print(f"{name}: {len(part)} utterances")
    else:
        save_dataset(ds, args.out)
        print(f"wrote {len(ds)} utterances to {args.out}")
    return 0


def _cmd_stats(args) -> int:
    ds = _load(args.data, args.format, args.tsv_columns)
    stats = compute_stats(ds)
    print(json.dumps(stats.to_dict(), indent=2) if args.json else stats.to_text())
    return 0


def _cmd_phrases(args) -> int:
    ds = _load(args.data, args.format, args.tsv_columns)
    vocab = extract_phrases(ds.pairs(normalized=True))
    payload = {
        "phrases": [list(p) for p in vocab.phrases],
        "frequencies": list(vocab.frequencies),
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"wrote {len(vocab)} phrases to {args.out}")
    else:
        print(json.dumps(payload, indent=2))
    return 0


def _cmd_train(args) -> int:
    cfg, raw = _resolve_train_config(args)
    copy_cfg = _resolve_copy_config(args, raw)
    train_ds = _load(args.train, args.format, args.tsv_columns)
    valid_ds = _load(args.valid, args.format, args.tsv_columns)
    vocab = _build_vocab(train_ds, args, raw)

    resolved = {
        "arch": args.arch, "train": cfg.to_dict(),
        "copy": copy_cfg.to_dict() if copy_cfg else None,
        "model": raw.get("model", {}), "vocab_size": len(vocab),
        "alpha_override": args.alpha_override,
    }
    _write_resolved(args.out, resolved)
    log_path = os.path.join(args.out, "train_log.jsonl")

    if args.arch == "tagger":
        phrases = extract_phrases(train_ds.pairs(normalized=True))
        model = _make_model(args.arch, len(vocab), raw, cfg.seed, n_phrases=len(phrases))
        model, log = train_tagger(model, vocab, phrases, train_ds, valid_ds, cfg,
                                  log_path=log_path)
        save_model(os.path.join(args.out, "model.rkcp"), model, vocab, phrases)
    else:
        model = _make_model(args.arch, len(vocab), raw, cfg.seed)
        model, log = train_seq2seq(model, vocab, train_ds, valid_ds, cfg,
                                   copy_cfg=copy_cfg,
                                   alpha_override=args.alpha_override,
                                   log_path=log_path)
        save_model(os.path.join(args.out, "model.rkcp"), model, vocab)
    best = max((r["valid_em"] for r in log if "valid_em" in r), default=0.0)
    print(f"best valid EM {best:.4f}; model saved to {args.out}/model.rkcp")
    return 0


def _cmd_pretrain(args) -> int:
    cfg, raw = _resolve_train_config(args)
    train_ds = _load(args.train, args.format, args.tsv_columns)
    vocab = _build_vocab(train_ds, args, raw)
    policy = DenoisePolicy(mask_prob=args.mask_prob)
    _write_resolved(args.out, {
        "arch": "mini-transformer", "train": cfg.to_dict(),
        "model": raw.get("model", {}), "vocab_size": len(vocab),
        "mask_prob": args.mask_prob,
    })
    model = _make_model("mini-transformer", len(vocab), raw, cfg.seed)
    pairs = train_ds.pairs(normalized=True)
    streams = [s for s, _ in pairs] + [t for _, t in pairs]
    model, log = pretrain_denoising(model, vocab, streams, cfg, policy,
                                    log_path=os.path.join(args.out, "train_log.jsonl"))
    save_model(os.path.join(args.out, "model.rkcp"), model, vocab)
    print(f"final pretrain loss {log[-1]['train_loss']:.4f}; "
          f"model saved to {args.out}/model.rkcp")
    return 0


def _cmd_finetune_copy(args) -> int:
    cfg, raw = _resolve_train_config(args)
    copy_cfg = _resolve_copy_config(args, raw)
    model, vocab, _ = load_model(args.model)
    if not isinstance(model, MiniTransformer):
        raise UsageError("finetune-copy needs a mini-transformer checkpoint")
    train_ds = _load(args.train, args.format, args.tsv_columns)
    valid_ds = _load(args.valid, args.format, args.tsv_columns)
    _write_resolved(args.out, {
        "arch": "mini-transformer", "train": cfg.to_dict(),
        "copy": copy_cfg.to_dict() if copy_cfg else None,
        "from": args.model, "alpha_override": args.alpha_override,
    })
    model, log = finetune_with_copy(model, vocab, train_ds, valid_ds, cfg,
                                    copy_cfg=copy_cfg,
                                    alpha_override=args.alpha_override,
                                    log_path=os.path.join(args.out, "train_log.jsonl"))
    save_model(os.path.join(args.out, "model.rkcp"), model, vocab)
    best = max(r["valid_em"] for r in log if "valid_em" in r)
    print(f"best valid EM {best:.4f}; model saved to {args.out}/model.rkcp")
    return 0


def _cmd_distill(args) -> int:
    cfg, raw = _resolve_train_config(args)
    copy_cfg = _resolve_copy_config(args, raw)
    teacher, vocab, phrases = load_model(args.teacher)
    if isinstance(teacher, CrfTagger):
        tagger, tagger_vocab = teacher, vocab

        def teacher(u):
            src = surfaces(normalize(u.content_tokens))
            return predict_tagger(tagger, tagger_vocab, phrases, [src])[0]

    train_ds = _load(args.train, args.format, args.tsv_columns)
    valid_ds = _load(args.valid, args.format, args.tsv_columns)
    mode, width = _parse_decode(args.decode)
    dcfg = DistillConfig(decode=mode, beam_width=width,
                         finetune_on_gold=not args.no_gold_finetune)
    _write_resolved(args.out, {
        "arch": args.student_arch, "train": cfg.to_dict(),
        "copy": copy_cfg.to_dict() if copy_cfg else None,
        "distill": dcfg.to_dict(), "teacher": args.teacher,
        "model": raw.get("model", {}), "vocab_size": len(vocab),
    })
    student = _make_model(args.student_arch, len(vocab), raw, cfg.seed)
    student, report = distill(teacher, student, vocab, train_ds, valid_ds, cfg,
                              dcfg, copy_cfg=copy_cfg,
                              log_path=os.path.join(args.out, "train_log.jsonl"))
    save_model(os.path.join(args.out, "model.rkcp"), student, vocab)
    print(f"valid EM {report['valid_em']:.4f} "
          f"({report['skipped_empty']} empty teacher outputs skipped); "
          f"model saved to {args.out}/model.rkcp")
    return 0


def _cmd_gridsearch(args) -> int:
    cfg, raw = _resolve_train_config(args)
    train_ds = _load(args.train, args.format, args.tsv_columns)
    valid_ds = _load(args.valid, args.format, args.tsv_columns)
    vocab = _build_vocab(train_ds, args, raw)
    lambdas = [float(x) for x in args.lambdas.split(",")] if args.lambdas else None
    ts = [float(x) for x in args.ts.split(",")] if args.ts else None
    _write_resolved(args.out, {
        "arch": args.arch, "train": cfg.to_dict(), "model": raw.get("model", {}),
        "vocab_size": len(vocab), "lambdas": lambdas, "ts": ts,
    })

    def factory(seed):
        return _make_model(args.arch, len(vocab), raw, seed)

    best, rows = grid_search(factory, vocab, train_ds, valid_ds, cfg,
                             lambdas=lambdas, ts=ts,
                             csv_path=os.path.join(args.out, "grid.csv"))
    print(f"best hinge_lambda={best.hinge_lambda} threshold={best.threshold} "
          f"over {len(rows)} cells; grid written to {args.out}/grid.csv")
    return 0


def _cmd_predict(args) -> int:
    model, vocab, phrases = load_model(args.model)
    ds = _load(args.data, args.format, args.tsv_columns)
    if isinstance(model, CrfTagger):
        sources = [s for s, _ in ds.pairs(normalized=True)]
        outs = predict_tagger(model, vocab, phrases, sources)
        preds = {u.id: out for u, out in zip(ds, outs)}
    else:
        mode, width = _parse_decode(args.decode)
        preds = predict_dataset(model, vocab, ds, decode=mode, beam_width=width,
                                max_len=args.max_len,
                                alpha_override=args.alpha_override)
    _write_predictions(args.out, preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    ds = _load(args.data, args.format, args.tsv_columns)
    preds = _read_predictions(args.pred)
    report = corpus_eval(preds, ds, sari_delete_precision=args.sari_delete_precision)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    print(report.to_text() if args.text else report.to_json())
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="rephrasekit",
                     description="Message-content rephrasing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True,
                   help="JSONL path, or a directory when --splits is given")
    p.add_argument("--splits", default=None, help='e.g. "0.8,0.1,0.1" (train,test,valid)')
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--json", action="store_true")
    _add_data_args(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("phrases", help="extract the insert-phrase vocabulary")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    _add_data_args(p)
    p.set_defaults(func=_cmd_phrases)

    p = sub.add_parser("train", help="train a model from scratch")
    p.add_argument("--arch", required=True, choices=ARCHES)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hinge-lambda", type=float, default=None)
    p.add_argument("--hinge-threshold", type=float, default=None)
    p.add_argument("--hinge-on-alpha-only", action="store_true")
    p.add_argument("--alpha-override", type=float, default=None)
    _add_data_args(p)
    _add_train_overrides(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("pretrain", help="denoising pretraining (mini-transformer)")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-prob", type=float, default=0.15)
    _add_data_args(p)
    _add_train_overrides(p)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("finetune-copy", help="graft a copy head and fine-tune")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hinge-lambda", type=float, default=None)
    p.add_argument("--hinge-threshold", type=float, default=None)
    p.add_argument("--hinge-on-alpha-only", action="store_true")
    p.add_argument("--alpha-override", type=float, default=None)
    _add_data_args(p)
    _add_train_overrides(p)
    p.set_defaults(func=_cmd_finetune_copy)

    p = sub.add_parser("distill", help="train a student on teacher decodes")
    p.add_argument("--teacher", required=True)
    p.add_argument("--student-arch", required=True,
                   choices=("pointer-lstm", "mini-transformer"))
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decode", default="beam:5")
    p.add_argument("--no-gold-finetune", action="store_true")
    p.add_argument("--hinge-lambda", type=float, default=None)
    p.add_argument("--hinge-threshold", type=float, default=None)
    _add_data_args(p)
    _add_train_overrides(p)
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("gridsearch", help="sweep the copy hinge grid")
    p.add_argument("--arch", required=True,
                   choices=("pointer-lstm", "mini-transformer"))
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambdas", default=None, help="comma-separated hinge weights")
    p.add_argument("--ts", default=None, help="comma-separated thresholds")
    _add_data_args(p)
    _add_train_overrides(p)
    p.set_defaults(func=_cmd_gridsearch)

    p = sub.add_parser("predict", help="decode a dataset with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decode", default="greedy", help="greedy or beam[:k]")
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--alpha-override", type=float, default=None)
    _add_data_args(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="score a prediction file")
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--text", action="store_true")
    p.add_argument("--sari-delete-precision", action="store_true")
    _add_data_args(p)
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, MetricError, CheckpointError, DivergenceError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
