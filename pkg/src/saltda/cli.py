"""Command-line front end.

Subcommands::

    synth              write source/target/test CSVs for a synthetic covariate shift
    adapt              train once and write a run report
    ablate             compare modes A1..A5
    sweep-target-size  accuracy versus amount of target training data
    sweep-ensemble     accuracy versus number of target subspaces
    eval               score a saved model on a labeled CSV

Training settings are layered: built-in defaults, then ``--config`` (JSON with
``TrainConfig`` field names), then individual flags.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import data
from .errors import ConfigError, IoError, SaltError, SchemaError
from .experiments import run_ablation, run_ensemble_sweep, run_target_size_sweep
from .trainer import CSV_COLUMNS, MODES, TrainConfig, predict_model, train
from .model import load_model, save_model


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


# flag -> (TrainConfig field, type)
_TRAIN_FLAGS = {
    "--mode": ("mode", str),
    "--subspace-dim": ("subspace_dim", int),
    "--n-iter": ("n_iter", int),
    "--t1": ("t1", int),
    "--t2": ("t2", int),
    "--batch-size": ("batch_size", int),
    "--split-fraction": ("split_fraction", float),
    "--seed": ("seed", int),
    "--ensemble-size": ("ensemble_size", int),
    "--early-stop-tol": ("early_stop_tol", float),
    "--warmup-steps": ("warmup_steps", int),
    "--warmup-lr": ("warmup_lr", float),
    "--primary-lr": ("primary_lr", float),
    "--momentum": ("momentum", float),
    "--aux-lr": ("aux_lr", float),
}
_WEIGHT_FLAGS = ("lambda_c", "lambda_cb", "gamma_c", "gamma_cb")


def _add_train_flags(p):
    p.add_argument("--config", help="JSON file of TrainConfig fields")
    for flag, (name, typ) in _TRAIN_FLAGS.items():
        p.add_argument(flag, dest=name, type=typ, default=None)
    for name in _WEIGHT_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=None)


def _add_data_flags(p, test_required=True):
    p.add_argument("--source", required=True, help="labeled source CSV")
    p.add_argument("--target", required=True, help="target training CSV (labels ignored)")
    p.add_argument("--test", required=test_required, help="labeled target test CSV")
    p.add_argument("--out", help="output file")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_config(args) -> TrainConfig:
    doc: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(TrainConfig)}
    for name, _ in _TRAIN_FLAGS.values():
        value = getattr(args, name, None)
        if value is not None:
            doc[name] = value
    weights = dict(doc.get("weights", {}))
    for name in _WEIGHT_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            weights[name] = value
    if weights:
        doc["weights"] = weights
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
    try:
        return TrainConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _load_inputs(args):
    source = data.load_csv(args.source, has_labels=True, domain_tag="source")
    target = data.load_csv(args.target, has_labels=None, domain_tag="target").unlabeled()
    test = None
    if getattr(args, "test", None):
        test = data.load_csv(args.test, has_labels=True, domain_tag="test")
    if source.ambient_dim != target.ambient_dim or (test and test.ambient_dim != source.ambient_dim):
        raise SchemaError("source, target and test CSVs must have the same number of features")
    return source, target, test


def _json_text(doc) -> str:
    return json.dumps(doc, indent=1, allow_nan=True) + "\n"


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _write(path, text):
    if path is None:
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _print_table(columns, rows, out=None):
    out = out or sys.stdout
    cells = [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c) for i, c in enumerate(columns)]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)), file=out)
    for r in cells:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)), file=out)


# --- subcommands --------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = data.ShiftSpec(
        class_count=args.classes,
        ambient_dim=args.ambient_dim,
        intrinsic_dim=args.intrinsic_dim,
        samples_per_class=args.samples_per_class,
        rotation_angle_degrees=args.angle,
        translation_magnitude=args.translation,
        noise_sigma=args.noise,
        seed=args.seed,
        class_separation=args.separation,
    )
    source, target_train, test = data.synthetic_task(spec, args.test_fraction)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {k: os.path.join(args.out_dir, f"{k}.csv") for k in ("source", "target", "test")}
    data.save_csv(source, paths["source"], include_labels=True)
    data.save_csv(target_train, paths["target"], include_labels=False)
    data.save_csv(test, paths["test"], include_labels=True)
    geom = data.shift_geometry(spec)
    rotation_shift = float(np.linalg.norm(geom.rotation - np.eye(spec.ambient_dim)))
    print(f"ambient_dim {spec.ambient_dim}  classes {spec.class_count}")
    print(f"source {len(source)} rows -> {paths['source']}")
    print(f"target {len(target_train)} rows -> {paths['target']}")
    print(f"test   {len(test)} rows -> {paths['test']}")
    print(f"rotation shift magnitude {rotation_shift:.6g}")
    print(f"translation magnitude {float(np.linalg.norm(geom.translation)):.6g}")
    return 0


def cmd_adapt(args) -> int:
    config = build_config(args)
    source, target, test = _load_inputs(args)
    report = train(source, target, config, eval_set=test)
    if args.format == "json":
        _write(args.out, _json_text(report.to_dict()))
    else:
        _write(args.out, _csv_text(CSV_COLUMNS, report.csv_rows()))
    if args.model_out:
        save_model(report.model, args.model_out)
    print(f"mode {report.mode}  members {len(report.model.members) or 1}")
    print(f"source accuracy {report.source_accuracy:.4f}")
    if report.target_accuracy is not None:
        print(f"target accuracy {report.target_accuracy:.4f}")
    if report.iterations:
        _print_table(
            ("iter", "phi_drift", "phi_step", "tgt_acc"),
            [(r.iteration, r.phi_drift, r.phi_step, r.target_accuracy) for r in report.iterations],
        )
    return 0


def _emit_rows(args, columns, rows):
    table = [tuple(r[c] for c in columns) for r in rows]
    if args.format == "json":
        _write(args.out, _json_text(rows))
    else:
        _write(args.out, _csv_text(columns, table))
    _print_table(columns, table)


def cmd_ablate(args) -> int:
    config = build_config(args)
    source, target, test = _load_inputs(args)
    rows = run_ablation(source, target, test, config)
    _emit_rows(args, ("mode", "source_accuracy", "target_accuracy"), rows)
    return 0


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def cmd_sweep_target_size(args) -> int:
    config = build_config(args)
    source, target, test = _load_inputs(args)
    rows = run_target_size_sweep(source, target, test, _float_list(args.fractions), config)
    _emit_rows(args, ("fraction", "n_target", "target_accuracy"), rows)
    return 0


def cmd_sweep_ensemble(args) -> int:
    config = build_config(args)
    source, target, test = _load_inputs(args)
    sizes = _float_list(args.k)
    if any(k != int(k) for k in sizes):
        raise ConfigError("ensemble sizes must be integers")
    rows = run_ensemble_sweep(source, target, test, [int(k) for k in sizes], config)
    _emit_rows(args, ("k", "target_accuracy"), rows)
    return 0


def evaluate(model, test) -> tuple[float, np.ndarray]:
    """Accuracy and ``C x C`` confusion counts (rows: true class, columns: predicted)."""
    if test.ambient_dim != model.classifier.ambient_dim:
        raise SchemaError(
            f"test CSV has {test.ambient_dim} features, model expects {model.classifier.ambient_dim}"
        )
    C = model.classifier.n_classes
    if test.labels.max() >= C:
        raise SchemaError(f"test labels exceed the model's {C} classes")
    pred = predict_model(model, test.features)
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (test.labels, pred), 1)
    return float(np.mean(pred == test.labels)), confusion


def cmd_eval(args) -> int:
    try:
        model = load_model(args.model)
    except OSError as exc:
        raise IoError(f"cannot read model {args.model}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{args.model} is not valid JSON: {exc}") from exc
    test = data.load_csv(args.test, has_labels=True, domain_tag="test")
    acc, confusion = evaluate(model, test)
    print(f"accuracy {acc:.4f}")
    print("confusion (rows true, columns predicted)")
    for row in confusion:
        print(" ".join(str(v) for v in row))
    if args.out:
        _write(args.out, _json_text({"accuracy": acc, "confusion": confusion.tolist()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="saltda", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic source/target/test triple")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--ambient-dim", type=int, default=10)
    p.add_argument("--intrinsic-dim", type=int, default=4)
    p.add_argument("--samples-per-class", type=int, default=200)
    p.add_argument("--angle", type=float, default=45.0)
    p.add_argument("--translation", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("adapt", help="train once and write a run report")
    _add_data_flags(p, test_required=False)
    _add_train_flags(p)
    p.add_argument("--model-out", help="also write the bare model document here")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("ablate", help=f"compare modes {', '.join(MODES)}")
    _add_data_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-target-size", help="accuracy versus target training fraction")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--fractions", default="0.5,0.7,1.0")
    p.set_defaults(func=cmd_sweep_target_size)

    p = sub.add_parser("sweep-ensemble", help="accuracy versus ensemble size")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--k", default="1,3,5", help="comma-separated ensemble sizes")
    p.set_defaults(func=cmd_sweep_ensemble)

    p = sub.add_parser("eval", help="score a saved model or run report")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SaltError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"saltda: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
