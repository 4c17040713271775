"""``tan`` command line: synth, train, eval, predict, attention, gradcheck.

Exit codes: 0 ok, 1 gradcheck failure, 2 invalid config/usage, 3 data or
checkpoint problem, 4 category inventory mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import corpus, synth
from .config import TrainConfig
from .evaluation import InventoryMismatchError, evaluate
from .gradcheck import TOLERANCE, gradcheck_report
from .model import forward, init_params, make_batch
from .training import CheckpointError, fit, load_checkpoint, save_checkpoint
from .visualize import AttentionExport, to_csv, to_svg, to_terminal

log = logging.getLogger("tan")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_INVENTORY = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# run config
# ---------------------------------------------------------------------------

PATH_KEYS = ("train_path", "test_path", "embeddings_path", "stopwords_path")


@dataclass
class RunConfig:
    format: str
    train_path: Path
    test_path: Path | None = None
    embeddings_path: Path | None = None
    embedding_fallback: str = "random"
    stopwords_path: Path | None = None
    oov_policy: str = "seeded-random"
    out_dir: Path = Path("run")
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "train"}
        d = {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}
        return {**d, **self.train.to_dict()}


def resolve_run_config(doc: dict, base_dir: Path, overrides: dict | None = None) -> RunConfig:
    """Merge defaults < file < overrides; reject unknown keys."""
    merged = {**doc, **(overrides or {})}
    run_keys = {f.name for f in fields(RunConfig)} - {"train"}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(merged) - run_keys - train_keys
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "format" not in merged or "train_path" not in merged:
        raise ConfigError("config needs at least 'format' and 'train_path'")
    if merged["format"] not in corpus.FORMATS:
        raise ConfigError(f"format must be one of {corpus.FORMATS}")
    if merged.get("embedding_fallback", "random") not in ("random", "none"):
        raise ConfigError("embedding_fallback must be 'random' or 'none'")
    if merged.get("oov_policy", "seeded-random") not in ("seeded-random", "shared-unknown"):
        raise ConfigError("oov_policy must be 'seeded-random' or 'shared-unknown'")
    run = {k: merged[k] for k in run_keys if k in merged}
    for k in PATH_KEYS + ("out_dir",):
        if run.get(k) is not None:
            p = Path(run[k])
            run[k] = p if p.is_absolute() else base_dir / p
    try:
        train = TrainConfig.for_dataset(merged["format"], **{k: merged[k] for k in train_keys if k in merged})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(train=train, **run)


def check_paths(rc: RunConfig) -> None:
    for key in ("train_path", "test_path", "stopwords_path"):
        p = getattr(rc, key)
        if p is not None and not p.is_file():
            raise DataError(f"{key} {p} does not exist")
    if rc.embeddings_path is None or not rc.embeddings_path.is_file():
        if rc.embedding_fallback == "none":
            raise DataError(f"embeddings file {rc.embeddings_path} missing and embedding_fallback is 'none'")
        if rc.embeddings_path is not None:
            log.warning("embeddings file %s missing; using seeded random vectors", rc.embeddings_path)


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def cmd_synth(args) -> int:
    out = Path(args.out_dir or "synthetic")
    paths = synth.write_synthetic(out, n=args.n, seed=42 if args.seed is None else args.seed)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return EXIT_OK


def cmd_train(args) -> int:
    if not args.config:
        raise ConfigError("train needs --config")
    cfg_path = Path(args.config)
    try:
        doc = json.loads(cfg_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
    overrides = _parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    rc = resolve_run_config(doc, cfg_path.resolve().parent, overrides)
    if args.out_dir:
        rc.out_dir = Path(args.out_dir)
    check_paths(rc)
    cfg = rc.train

    raw = corpus.read_semeval(rc.train_path, rc.format)
    labeled = corpus.filter_unlabeled(raw)
    if not labeled:
        raise DataError("training file has no labeled sentences")
    inventory = corpus.CategoryInventory.from_sentences(labeled)
    stopwords = corpus.load_stopwords(rc.stopwords_path)
    train_raw, val_raw = corpus.stratified_split(labeled, cfg.val_ratio, cfg.seed)
    log.info("%d labeled sentences (%d dropped), train %d / validation %d, %d categories",
             len(labeled), len(raw) - len(labeled), len(train_raw), len(val_raw), len(inventory))

    pretrained = None
    if rc.embeddings_path is not None and rc.embeddings_path.is_file():
        pretrained = corpus.load_embeddings(rc.embeddings_path)
    tokens = [t for s in train_raw for t in corpus.preprocess(s.text, stopwords)]
    table = corpus.build_embedding_table(tokens, cfg.embed_dim, cfg.seed, pretrained, rc.oov_policy)
    train_set = corpus.encode_sentences(train_raw, inventory, table, stopwords)
    val_set = corpus.encode_sentences(val_raw, inventory, table, stopwords)

    model = init_params(cfg, inventory, table)
    model.stopwords = stopwords
    out_dir = rc.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "resolved_config.json", rc.to_dict())
    with (out_dir / "epochs.jsonl").open("w", encoding="utf-8") as fh:
        def on_epoch(rec):
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

        result = fit(model, train_set, val_set, cfg, on_epoch=on_epoch)
    best = result.model
    save_checkpoint(best, out_dir / "model.tan", result.best_f1, result.best_epoch)

    val_report = evaluate(best, val_set or train_set)
    train_report = evaluate(best, train_set)
    _write_json(out_dir / "metrics.json", val_report.to_json())
    _write_json(out_dir / "train_metrics.json", train_report.to_json())
    summary = {
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "threshold": best.threshold,
        "validation": val_report.to_json()["micro"],
        "train": train_report.to_json()["micro"],
    }
    if rc.test_path is not None:
        test_raw = corpus.read_semeval(rc.test_path, rc.format)
        test_set = _encode_for_model(test_raw, best)
        test_report = evaluate(best, test_set)
        _write_json(out_dir / "test_metrics.json", test_report.to_json())
        summary["test"] = test_report.to_json()["micro"]
    _write_json(out_dir / "summary.json", summary)
    if not args.quiet:
        print(json.dumps(summary, indent=2))
    return EXIT_OK


def _encode_for_model(raw, model) -> list:
    unknown = sorted({c for s in raw for c in s.categories} - set(model.inventory.names))
    if unknown:
        raise InventoryMismatchError(f"dataset categories {unknown} are not in the model inventory")
    out = []
    for s in raw:
        tokens, ids = model.encode_text(s.text)
        out.append(corpus.Sentence(s.id, tokens, ids, model.inventory.encode(s.categories)))
    return out


def _load(path) -> "object":
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None


def cmd_eval(args) -> int:
    model = _load(args.checkpoint)
    raw = corpus.read_semeval(args.data, args.format)
    report = evaluate(model, _encode_for_model(raw, model), args.threshold)
    text = json.dumps(report.to_json(), indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def _single_forward(model, text: str):
    tokens, ids = model.encode_text(text)
    out = forward(model, make_batch([ids], model.pad_id))
    return tokens, out


def cmd_predict(args) -> int:
    model = _load(args.checkpoint)
    tokens, out = _single_forward(model, args.text)
    probs = out.probabilities.data[0]
    keep = np.flatnonzero(probs > model.threshold)
    if keep.size == 0 and model.config.argmax_fallback:
        keep = np.array([int(np.argmax(probs))])
    result = {
        "text": args.text,
        "tokens": tokens,
        "categories": [model.inventory.names[i] for i in keep],
        "probabilities": {n: float(p) for n, p in zip(model.inventory.names, probs)},
        "threshold": model.threshold,
    }
    print(json.dumps(result))
    return EXIT_OK


def cmd_attention(args) -> int:
    model = _load(args.checkpoint)
    tokens, out = _single_forward(model, args.text)
    export = AttentionExport(tokens, np.asarray(out.attention[0], dtype=np.float64))
    render = {"csv": to_csv, "svg": to_svg, "term": to_terminal}[args.render]
    text = render(export)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = gradcheck_report(args.variant, 0 if args.seed is None else args.seed, args.literal_eq3, args.corrupt_gradient)
    worst = max(report.values())
    if not args.quiet:
        width = max(len(n) for n in report)
        print(f"{'parameter':<{width}}  max rel err")
        for name, err in report.items():
            flag = "" if err < TOLERANCE else "  FAIL"
            print(f"{name:<{width}}  {err:.3e}{flag}")
        print(f"variant={args.variant} worst={worst:.3e} tolerance={TOLERANCE:g}")
    return EXIT_OK if worst < TOLERANCE else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="run config JSON")
    common.add_argument("--out-dir", default=None)
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="tan", description="Topic-attention aspect category detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write the synthetic acceptance corpus")
    p.add_argument("--n", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train from a run config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (JSON value)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on a SemEval file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", required=True, choices=corpus.FORMATS)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="categories for one sentence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("attention", parents=[common], help="export topic attention for one sentence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--render", choices=("csv", "svg", "term"), default="csv")
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of backprop")
    p.add_argument("--variant", choices=("tan", "va", "taws"), default="tan")
    p.add_argument("--literal-eq3", action="store_true", help="use the literal (reset-free) candidate state")
    p.add_argument("--corrupt-gradient", action="store_true", help="negative control: perturb the analytic gradient")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InventoryMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVENTORY
    except (DataError, corpus.CorpusError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
