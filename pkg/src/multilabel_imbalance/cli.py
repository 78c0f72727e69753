"""Command-line entry point.

Every subcommand reads an optional ``key=value`` config file (``--config``,
``#`` starts a comment) and then ``--key value`` overrides. Unknown keys are
rejected. Exit codes: 0 success, 1 failed check, 2 bad config, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import gradcheck as gc
from .evaluation import evaluate
from .losses import NumericalDomainError
from .rates import estimate_rates, load_rates, save_rates, top_confused_pairs
from .sampling import build_plan, format_plan_tsv
from .schedule import TrainPlan, hybrid_plan, single_phase_plan
from .synth import (
    ConfigError,
    SynthConfig,
    generate,
    read_dataset,
    split_indices,
    write_dataset,
)
from .taxonomy import AnnotationError, TaxonomyError, imbalance_magnitude, load_annotations, load_taxonomy
from .trainer import LossSpec, TrainingDiverged, load_checkpoint, predict, save_checkpoint, train

EXIT_FAILED, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3, 4

DEFAULTS = {
    "gen-data": {
        "out": "data",
        "seed": 0,
        "num_leaf": 40,
        "num_parents": 8,
        "depth": 3,
        "imbalance_magnitude": 100.0,
        "feature_dim": 32,
        "separation": 5.0,
        "confusion_pairs": "",
        "parent_only_prob": 0.0,
        "multi_leaf_prob": 0.0,
        "images": 10000,
        "flip_mode": "replace",
        "unverified_frac": 0.0,
    },
    "estimate-rates": {
        "annotations": "data/annotations.jsonl",
        "taxonomy": "data/classes.tsv",
        "reference": "",
        "min_rate": 0.1,
        "mode": "remove_suppression",
        "image_level": False,
        "top_k": 55,
        "out": "rates.tsv",
        "seed": 0,
    },
    "sample-plan": {
        "annotations": "data/annotations.jsonl",
        "taxonomy": "data/classes.tsv",
        "lam": 0.7,
        "epochs_equiv": 1.0,
        "out": "-",
        "seed": 0,
    },
    "train": {
        "data": "data",
        "rates": "",
        "min_rate": 0.1,
        "out": "run",
        "loss": "concurrent",
        "grad_mode": "exact",
        "gamma": 2.0,
        "alpha": 0.25,
        "schedule": "balanced",
        "epochs": 7,
        "pretrain_epochs": 7,
        "lam": 0.7,
        "batch_size": 16,
        "base_lr_per_sample": 0.00125,
        "momentum": 0.9,
        "weight_decay": 0.0001,
        "hidden": 0,
        "background": False,
        "val_fraction": 0.25,
        "eval_mode": "concurrent",
        "seed": 0,
    },
    "eval": {
        "checkpoint": "run/model.bin",
        "data": "data",
        "mode": "concurrent",
        "rates": "",
        "split": "val",
        "val_fraction": 0.25,
        "seed": 0,
        "out": "eval-report.tsv",
    },
    "gradcheck": {
        "num_classes": 10,
        "trials": 100,
        "tol": 1e-5,
        "seed": 0,
        "out": "-",
    },
}


def _convert(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return low in ("1", "true", "yes")
        return type(default)(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def read_config_file(path, defaults: dict) -> dict:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in defaults:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value, defaults[key])
    return out


def resolve_config(command: str, argv: list[str]) -> dict:
    """Defaults, then config file, then ``--key value`` overrides."""
    defaults = DEFAULTS[command]
    parser = argparse.ArgumentParser(prog=f"multilabel-imbalance {command}", add_help=True)
    parser.add_argument("--config")
    for key in defaults:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key)
    args, unknown = parser.parse_known_args(argv)
    if unknown:
        raise ConfigError(f"unknown arguments: {' '.join(unknown)}")
    cfg = dict(defaults)
    if args.config:
        cfg.update(read_config_file(args.config, defaults))
    for key in defaults:
        raw = getattr(args, key)
        if raw is not None:
            cfg[key] = _convert(key, raw, defaults[key])
    return cfg


def config_echo(cfg: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.items())


def parse_pairs(text: str) -> tuple[tuple[int, int, float], ...]:
    """``"i:j:rate,i:j:rate"`` to a tuple of triples."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        try:
            i, j, p = item.split(":")
            out.append((int(i), int(j), float(p)))
        except ValueError:
            raise ConfigError(f"bad confusion pair {item!r}; expected i:j:rate") from None
    return tuple(out)


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def cmd_gen_data(cfg: dict) -> int:
    synth_keys = {k: v for k, v in cfg.items() if k not in ("out", "confusion_pairs")}
    sc = SynthConfig(confusion_pairs=parse_pairs(cfg["confusion_pairs"]), **synth_keys)
    sc.validate()
    ds = generate(sc)
    try:
        write_dataset(ds, cfg["out"])
        (Path(cfg["out"]) / "gen.config").write_text(config_echo(cfg), encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write to {cfg['out']}: {exc}") from None
    counts = ds.observed.counts
    print(f"C={ds.taxonomy.num_classes}\tN={len(ds)}\timbalance_magnitude={imbalance_magnitude(counts):.6g}")
    return 0


def cmd_estimate_rates(cfg: dict) -> int:
    tax = load_taxonomy(cfg["taxonomy"])
    ann = load_annotations(cfg["annotations"], tax.num_classes)
    ref = load_annotations(cfg["reference"], tax.num_classes) if cfg["reference"] else None
    mode = None if cfg["mode"] == "none" else cfg["mode"]
    if mode not in (None, "remove_suppression", "literal_zero"):
        raise ConfigError(f"unknown hierarchy mode {cfg['mode']!r}")
    r = estimate_rates(ann, tax, cfg["min_rate"], mode, ref, cfg["image_level"])
    save_rates(r, cfg["out"])
    for i, j, rate in top_confused_pairs(r, cfg["top_k"], tax):
        print(f"{tax.names[i]}\t{tax.names[j]}\t{rate:.4f}")
    return 0


def cmd_sample_plan(cfg: dict) -> int:
    tax = load_taxonomy(cfg["taxonomy"])
    ann = load_annotations(cfg["annotations"], tax.num_classes)
    plan = build_plan(ann, cfg["lam"])
    _emit(format_plan_tsv(plan, tax.names, cfg["epochs_equiv"]), cfg["out"])
    return 0


def _build_train_plan(cfg: dict) -> TrainPlan:
    common = dict(
        base_lr_per_sample=cfg["base_lr_per_sample"],
        batch_size=cfg["batch_size"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
    )
    kind = cfg["schedule"]
    if kind == "hybrid":
        return hybrid_plan(cfg["pretrain_epochs"], cfg["lam"], **common)
    if kind == "sequential":
        return single_phase_plan("sequential", cfg["epochs"], **common)
    if kind == "balanced":
        return single_phase_plan("balanced", cfg["epochs"], cfg["lam"], **common)
    raise ConfigError(f"unknown schedule {kind!r}; choose hybrid, sequential or balanced")


def _split(ds, cfg):
    tr, va = split_indices(len(ds), cfg["val_fraction"], cfg["seed"])
    return ds.subset(tr), ds.subset(va)


def cmd_train(cfg: dict) -> int:
    try:
        plan = _build_train_plan(cfg)
        loss = LossSpec(cfg["loss"], cfg["grad_mode"], cfg["gamma"], cfg["alpha"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds = read_dataset(cfg["data"])
    dtr, dva = _split(ds, cfg)
    c = ds.taxonomy.num_classes
    if cfg["rates"]:
        rates = load_rates(cfg["rates"], c)
    else:
        rates = estimate_rates(dtr.observed, ds.taxonomy, cfg["min_rate"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.log").write_text(config_echo(cfg) + f"plan={plan.describe()}\n", encoding="utf-8")
    save_rates(rates, out / "rates.used.tsv")
    res = train(dtr, plan, loss, rates, cfg["seed"], val=dva, eval_mode=cfg["eval_mode"],
                hidden=cfg["hidden"], background=cfg["background"])
    save_checkpoint(res.model, out / "model.bin")
    (out / "metrics.log").write_text(res.metrics_text(), encoding="utf-8")
    last = res.log[-1]
    print(f"epochs={len(res.log)}\ttrain_loss={last.train_loss:.6f}\tval_mAP={last.val_map:.6f}")
    return 0


def cmd_eval(cfg: dict) -> int:
    ds = read_dataset(cfg["data"])
    model = load_checkpoint(cfg["checkpoint"])
    if cfg["split"] == "val":
        ds = _split(ds, cfg)[1]
    elif cfg["split"] != "all":
        raise ConfigError("split must be 'val' or 'all'")
    c = ds.taxonomy.num_classes
    rates = None
    if cfg["mode"] == "concurrent":
        rates_path = cfg["rates"] or str(Path(cfg["checkpoint"]).parent / "rates.used.tsv")
        rates = load_rates(rates_path, c)
    elif cfg["mode"] != "softmax":
        raise ConfigError("mode must be 'softmax' or 'concurrent'")
    scores = predict(model, ds.features, cfg["mode"], rates, c)
    report = evaluate(scores, ds.truth)
    _emit(report.to_tsv(ds.taxonomy.names), cfg["out"])
    print(f"mAP\t{report.map:.6f}")
    return 0


def cmd_gradcheck(cfg: dict) -> int:
    results = gc.run_suite(cfg["num_classes"], cfg["trials"], cfg["seed"], tol=cfg["tol"])
    lines = ["loss\ttrials\tmax_rel_err\tstatus"]
    lines += [f"{r.name}\t{r.trials}\t{r.max_rel_err:.3e}\t{'pass' if r.passed else 'FAIL'}" for r in results]
    _emit("\n".join(lines) + "\n", cfg["out"])
    return 0 if all(r.passed for r in results) else EXIT_FAILED


COMMANDS = {
    "gen-data": cmd_gen_data,
    "estimate-rates": cmd_estimate_rates,
    "sample-plan": cmd_sample_plan,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help") or argv[0] not in COMMANDS:
        print("usage: multilabel-imbalance {%s} [--config FILE] [--key value ...]" % ",".join(COMMANDS),
              file=sys.stderr)
        return 0 if argv and argv[0] in ("-h", "--help") else EXIT_CONFIG
    command = argv[0]
    try:
        cfg = resolve_config(command, argv[1:])
        return COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalDomainError, TrainingDiverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, TaxonomyError, AnnotationError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
