"""Multi-run drivers behind the ``ablate`` and ``sweep-*`` subcommands."""
from __future__ import annotations

from dataclasses import replace

from .data import FeatureDataset, subsample
from .errors import ConfigError
from .trainer import MODES, TrainConfig, train, train_ensemble


def run_ablation(source, target, test, config: TrainConfig) -> list[dict]:
    """One row per mode A1..A5, all sharing ``config`` apart from the mode."""
    rows = []
    for mode in MODES:
        cfg = replace(config, mode=mode, ensemble_size=1)
        report = train(source, target, cfg, eval_set=test)
        rows.append(
            {
                "mode": mode,
                "source_accuracy": report.source_accuracy,
                "target_accuracy": report.target_accuracy,
            }
        )
    return rows


def _unique(values, what):
    if len(set(values)) != len(values):
        raise ConfigError(f"duplicate {what} values: {values}")


def run_target_size_sweep(
    source: FeatureDataset, target: FeatureDataset, test, fractions, config: TrainConfig
) -> list[dict]:
    """Train on seeded subsets of the target rows; always evaluate on the full test set.

    Rows come out in decreasing fraction order.
    """
    fractions = [float(f) for f in fractions]
    if not fractions:
        raise ConfigError("no fractions given")
    _unique(fractions, "fraction")
    rows = []
    for f in sorted(fractions, reverse=True):
        part = subsample(target, f, config.seed)
        report = train(source, part, config, eval_set=test)
        rows.append(
            {"fraction": f, "n_target": len(part), "target_accuracy": report.target_accuracy}
        )
    return rows


def run_ensemble_sweep(source, target, test, sizes, config: TrainConfig) -> list[dict]:
    sizes = [int(k) for k in sizes]
    if not sizes:
        raise ConfigError("no ensemble sizes given")
    _unique(sizes, "ensemble size")
    if min(sizes) < 1:
        raise ConfigError("ensemble sizes must be >= 1")
    rows = []
    for k in sizes:
        report = train_ensemble(source, target, replace(config, ensemble_size=k), eval_set=test)
        rows.append({"k": k, "target_accuracy": report.target_accuracy})
    return rows
