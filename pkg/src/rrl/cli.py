"""Command-line harness: train, crossval, eval, explain.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import model as rrl_model
from . import rules
from .data import DataError, EncodedDataset, accuracy, load_dataset, macro_f1, read_schema, stratified_kfold
from .model import CheckpointError, RRLConfig, RRLModel, build
from .train import TRAINERS, TrainConfig, TrainingError, fit

log = logging.getLogger("rrl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    """Everything needed to repeat a run: data paths, model and training settings, seed."""
    data: str
    schema: str
    out: str
    seed: int
    model: RRLConfig = field(default_factory=RRLConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    folds: int = 5
    schema_fingerprint: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["version"] = __version__
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        d = {k: v for k, v in d.items() if k != "version"}
        d["model"] = RRLConfig(**d.get("model", {}))
        d["train"] = TrainConfig(**d.get("train", {}))
        return cls(**d)


def parse_structure(text: str) -> list[int]:
    try:
        widths = [int(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"--structure expects n1[,n2[,n3]], got {text!r}") from None
    if not 1 <= len(widths) <= 3:
        raise UsageError("--structure takes one to three layer widths")
    return widths


def _master_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("RRL_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"RRL_SEED must be an integer, got {env!r}") from None


def run_config(args) -> RunConfig:
    """Merge an optional config file with explicit flags (flags win)."""
    base = None
    if getattr(args, "config", None):
        try:
            base = RunConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    data = args.data or (base.data if base else None)
    schema = args.schema or (base.schema if base else None)
    if not data or not schema:
        raise UsageError("--data and --schema are required (directly or via --config)")
    mc = dataclasses.replace(base.model) if base else RRLConfig()
    tc = dataclasses.replace(base.train) if base else TrainConfig()
    if args.structure is not None:
        mc.structure = parse_structure(args.structure)
    if args.bounds is not None:
        mc.k = args.bounds
    if args.lam is not None:
        mc.lam = args.lam
    if args.derivative_trick:
        mc.derivative_trick = True
    for flag, attr in (("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size"),
                       ("trainer", "trainer"), ("valid_frac", "valid_frac")):
        v = getattr(args, flag)
        if v is not None:
            setattr(tc, attr, v)
    seed = args.seed if args.seed is not None or base is None else base.seed
    seed = _master_seed(seed)
    mc.seed = tc.seed = seed
    tc.lam = None
    folds = getattr(args, "folds", None) or (base.folds if base else 5)
    cfg = RunConfig(data, schema, args.out, seed, mc, tc, folds)
    try:
        mc.validate()
        tc.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


# -- shared pieces -----------------------------------------------------------

def _ruleset(model: RRLModel, C, B) -> rules.RuleSet:
    view = rules.prune_dead_nodes(model, C, B)
    return rules.eliminate_redundant(rules.extract(view))


def _metrics(model: RRLModel, ds: EncodedDataset, idx: np.ndarray, rs: rules.RuleSet) -> dict:
    C, B, y = ds.C[idx], ds.B[idx], ds.y[idx]
    logits = rrl_model.discrete_logits(model, C, B)
    pred = logits.argmax(axis=1)
    exact = np.array_equal(rules.extract(model).decision_function(C, B), logits)
    return {"n": int(len(idx)), "macro_f1": macro_f1(pred, y, model.n_classes),
            "accuracy": accuracy(pred, y), "edge_count": rs.edge_count,
            "avg_rule_length": rs.avg_rule_length, "n_rules": len(rs.rules),
            "linear_nonzeros": rs.linear_nonzeros, "rules_match_model": bool(exact)}


def _write_run(out: Path, cfg: RunConfig, model: RRLModel, tlog, rs: rules.RuleSet, metrics: dict,
               top: int = 10) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1), encoding="utf-8")
    tlog.to_csv(out / "trainlog.csv")
    rrl_model.save(model, out / "model.rrl.json")
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1), encoding="utf-8")
    (out / "rules.txt").write_text(rules.explain(model, rs, top), encoding="utf-8")
    (out / "rules.json").write_text(rs.to_json(), encoding="utf-8")


def train_once(cfg: RunConfig, ds: EncodedDataset, train_idx: np.ndarray, seed: int) -> tuple[RRLModel, object]:
    mc = dataclasses.replace(cfg.model, seed=seed)
    tc = dataclasses.replace(cfg.train, seed=seed)
    model = build(mc, ds.C[train_idx], ds.B.shape[1], ds.n_classes, seed=seed, schema=ds.schema)
    return fit(model, ds, tc, train_idx)


# -- commands ----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = run_config(args)
    ds = load_dataset(cfg.data, cfg.schema)
    cfg.schema_fingerprint = ds.schema.fingerprint()
    idx = np.arange(len(ds))
    t0 = time.perf_counter()
    model, tlog = train_once(cfg, ds, idx, cfg.seed)
    rs = _ruleset(model, ds.C, ds.B)
    metrics = {"train": _metrics(model, ds, idx, rs), "seconds": time.perf_counter() - t0}
    _write_run(Path(cfg.out), cfg, model, tlog, rs, metrics, args.top)
    m = metrics["train"]
    print(f"trained on {m['n']} rows: macro F1 {m['macro_f1']:.4f}  accuracy {m['accuracy']:.4f}  "
          f"edges {m['edge_count']}  avg rule length {m['avg_rule_length']:.2f}")
    print(f"outputs in {cfg.out}")
    return EXIT_OK


def _run_fold(cfg: RunConfig, ds: EncodedDataset, fold: int, train_idx: np.ndarray, test: np.ndarray) -> dict:
    seed = cfg.seed + fold
    t0 = time.perf_counter()
    model, tlog = train_once(cfg, ds, train_idx, seed)
    rs = _ruleset(model, ds.C[train_idx], ds.B[train_idx])
    metrics = {"fold": fold, "seed": seed, "test": _metrics(model, ds, test, rs),
               "train": _metrics(model, ds, train_idx, rs), "seconds": time.perf_counter() - t0}
    fold_cfg = dataclasses.replace(cfg, out=str(Path(cfg.out) / f"fold{fold}"), seed=seed,
                                   model=dataclasses.replace(cfg.model, seed=seed),
                                   train=dataclasses.replace(cfg.train, seed=seed))
    _write_run(Path(fold_cfg.out), fold_cfg, model, tlog, rs, metrics)
    return metrics


def _summary(per_fold: list[dict]) -> dict:
    out = {}
    for key in ("macro_f1", "accuracy", "edge_count", "avg_rule_length"):
        vals = np.array([f["test"][key] for f in per_fold], dtype=np.float64)
        out[key] = {"values": vals.tolist(), "mean": float(vals.mean()), "std": float(vals.std())}
    return out


def crossval(cfg: RunConfig, ds: EncodedDataset, jobs: int = 1) -> dict:
    """k-fold CV with bounds and weights re-drawn per fold from seed + fold."""
    plan = stratified_kfold(ds, cfg.folds, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "folds.json").write_text(plan.to_json(), encoding="utf-8")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(_run_fold, cfg, ds, f, tr, te) for f, (tr, te) in enumerate(plan.folds)]
            per_fold = [f.result() for f in futs]
    else:
        per_fold = [_run_fold(cfg, ds, f, tr, te) for f, (tr, te) in enumerate(plan.folds)]
    result = {"folds": per_fold, "summary": _summary(per_fold)}
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1), encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(result, indent=1), encoding="utf-8")
    return result


def cmd_crossval(args) -> int:
    cfg = run_config(args)
    ds = load_dataset(cfg.data, cfg.schema)
    cfg.schema_fingerprint = ds.schema.fingerprint()
    try:
        stratified_kfold(ds, cfg.folds, cfg.seed)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    result = crossval(cfg, ds, args.jobs)
    for f in result["folds"]:
        t = f["test"]
        print(f"fold {f['fold']}: F1 {t['macro_f1']:.4f}  acc {t['accuracy']:.4f}  "
              f"edges {t['edge_count']}  avg len {t['avg_rule_length']:.2f}")
    for key, s in result["summary"].items():
        print(f"{key}: {s['mean']:.4f} +/- {s['std']:.4f}")
    return EXIT_OK


def _load_for_data(model_path: str, data: str, schema: str) -> tuple[RRLModel, EncodedDataset]:
    model = rrl_model.load(model_path)
    features, label = read_schema(schema)
    ref = model.schema
    if ref is not None and (tuple(features), label) != (tuple(ref.features), ref.label):
        raise CheckpointError(f"schema fingerprint mismatch: {schema} does not describe the data "
                              f"the checkpoint was trained on")
    ds = load_dataset(data, schema, reference=ref)
    if ref is not None:
        rrl_model.load(model_path, expected_fingerprint=ds.schema.fingerprint())
    return model, ds


def cmd_eval(args) -> int:
    model, ds = _load_for_data(args.model, args.data, args.schema)
    idx = np.arange(len(ds))
    rs = _ruleset(model, ds.C, ds.B) if len(ds) else rules.extract(model)
    metrics = _metrics(model, ds, idx, rs)
    text = json.dumps(metrics, indent=1)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_explain(args) -> int:
    if bool(args.data) != bool(args.schema):
        raise UsageError("--data and --schema go together")
    if args.data:
        model, ds = _load_for_data(args.model, args.data, args.schema)
        rs = _ruleset(model, ds.C, ds.B)
    else:
        model = rrl_model.load(args.model)
        rs = rules.extract(model)
    sys.stdout.write(rules.explain(model, rs, args.top))
    if args.histogram:
        Path(args.histogram).write_text(
            json.dumps({"normalized_abs_weights": rules.weight_distribution(rs).tolist()}), encoding="utf-8")
    if args.json:
        Path(args.json).write_text(rs.to_json(), encoding="utf-8")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="CSV with a header row")
    p.add_argument("--schema", help="schema sidecar: one 'name,kind' line per column")
    p.add_argument("--config", help="config.json of an earlier run; explicit flags override it")
    p.add_argument("--structure", help="logical layer widths n1[,n2[,n3]] (default 32)")
    p.add_argument("--bounds", type=int, help="lower/upper bounds per continuous feature (default 5)")
    p.add_argument("--lambda", dest="lam", type=float, help="L2 coefficient on logical weights (default 0)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--trainer", choices=TRAINERS)
    p.add_argument("--valid-frac", type=float, help="hold out this fraction of the training split")
    p.add_argument("--derivative-trick", action="store_true", help="use the slow-decay gradient factor")
    p.add_argument("--seed", type=int, help="master seed (falls back to $RRL_SEED, then 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--top", type=int, default=10, help="rules per class in rules.txt")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rrl", description="Rule-based Representation Learner")
    p.add_argument("--version", action="version", version=f"rrl {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train on a whole dataset")
    _training_flags(t)
    t.set_defaults(func=cmd_train)

    cv = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    _training_flags(cv)
    cv.add_argument("--folds", type=int)
    cv.add_argument("--jobs", type=int, default=1, help="folds to run in parallel processes")
    cv.set_defaults(func=cmd_crossval)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--schema", required=True)
    e.add_argument("--out", help="also write the metrics JSON here")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("explain", help="print the rules of a checkpoint")
    x.add_argument("--model", required=True)
    x.add_argument("--data", help="prune dead nodes against this (training) data")
    x.add_argument("--schema")
    x.add_argument("--top", type=int, default=10)
    x.add_argument("--histogram", help="write normalized |weight| values as JSON")
    x.add_argument("--json", help="write the rule set as JSON")
    x.set_defaults(func=cmd_explain)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rrl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"rrl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"rrl: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
