"""Command-line harness: gen-data, run, sweep, verify.

Outputs are plot-ready: one CSV per trial (a row per metric record) plus a
summary.json aggregating final metrics across seeds. Every output embeds
the exact config and seed that produced it. Runs whose error leaves the
finite reporting range carry the divergence marker in the summary.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import (SWEEP_AXES, ConfigError, ExperimentConfig, apply_axis,
                     config_to_dict, load_config)
from .data import REGRESSION, save_csv
from .engine import (DIVERGENCE_MARKER, DIVERGENCE_THRESHOLD, PreparedData,
                     TrialResult, prepare_data, run_trial)

CSV_COLUMNS = ("iteration", "mse", "test_error_rate", "mee",
               "attack_success_rate", "accepted", "rejected", "buffered")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trial_csv(path: Path, result: TrialResult,
                    config: ExperimentConfig) -> None:
    lines = [
        "# config: " + json.dumps(config_to_dict(config), sort_keys=True),
        f"# seed: {result.seed}",
        ",".join(CSV_COLUMNS),
    ]
    for rec in result.records:
        lines.append(",".join(_fmt(getattr(rec, col)) for col in CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _marker_or_value(value: Optional[float], diverged: bool):
    if value is None:
        return None
    if diverged or not math.isfinite(value) or value > DIVERGENCE_THRESHOLD:
        return DIVERGENCE_MARKER
    return value


def _final_metrics(result: TrialResult) -> dict:
    rec = result.final_record
    return {
        "iteration": rec.iteration,
        "mse": _marker_or_value(rec.mse, result.diverged),
        "test_error_rate": _marker_or_value(rec.test_error_rate, result.diverged),
        "mee": _marker_or_value(rec.mee, result.diverged),
        "attack_success_rate": _marker_or_value(rec.attack_success_rate,
                                                result.diverged),
        "accepted": rec.accepted,
        "rejected": rec.rejected,
        "buffered": rec.buffered,
        "diverged": result.is_divergent(),
    }


def _aggregate(per_seed: List[dict], key: str):
    values = [m[key] for m in per_seed]
    if any(v is None for v in values):
        return None, None
    if any(v == DIVERGENCE_MARKER for v in values):
        return DIVERGENCE_MARKER, DIVERGENCE_MARKER
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return mean, std


def write_summary(path: Path, config: ExperimentConfig,
                  results: Sequence[TrialResult]) -> None:
    per_seed = {str(r.seed): _final_metrics(r) for r in results}
    finals = list(per_seed.values())
    summary = {
        "artifact_version": __version__,
        "config": config_to_dict(config),
        "seeds": [r.seed for r in results],
        "per_seed": per_seed,
        "mean": {}, "std": {},
    }
    for key in ("mse", "test_error_rate", "mee", "attack_success_rate"):
        mean, std = _aggregate(finals, key)
        summary["mean"][key] = mean
        summary["std"][key] = std
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def run_command(config: ExperimentConfig, out_dir: Path,
                seeds: Optional[Sequence[int]] = None) -> int:
    """Run one trial per seed; write per-trial CSVs and a summary JSON."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if seeds is None:
        seeds = config.seeds.run_seeds
    prepared = prepare_data(config)
    results = []
    for seed in seeds:
        result = run_trial(config, prepared, seed)
        write_trial_csv(out_dir / f"trial_seed{seed}.csv", result, config)
        results.append(result)
    write_summary(out_dir / "summary.json", config, results)
    return 0


def sweep_command(config: ExperimentConfig, axis: str, values: Sequence[float],
                  out_dir: Path) -> int:
    """One run per axis value; emit a combined long-format CSV."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis: {axis!r} (choose from {SWEEP_AXES})")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out_dir.mkdir(parents=True, exist_ok=True)
    combined = [",".join(("axis", "value", "seed") + CSV_COLUMNS)]
    for value in values:
        sub_config = apply_axis(config, axis, value)
        sub_dir = out_dir / f"{axis}_{value:g}"
        sub_dir.mkdir(parents=True, exist_ok=True)
        prepared = prepare_data(sub_config)
        results = []
        for seed in sub_config.seeds.run_seeds:
            result = run_trial(sub_config, prepared, seed)
            write_trial_csv(sub_dir / f"trial_seed{seed}.csv", result, sub_config)
            results.append(result)
            for rec in result.records:
                row = [axis, f"{value:g}", str(seed)]
                row += [_fmt(getattr(rec, col)) for col in CSV_COLUMNS]
                combined.append(",".join(row))
        write_summary(sub_dir / "summary.json", sub_config, results)
    (out_dir / "sweep.csv").write_text("\n".join(combined) + "\n", encoding="utf-8")
    return 0


def gen_data_command(config: ExperimentConfig, out_dir: Path) -> int:
    """Materialize the configured task's train/test split as CSV files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    prepared = prepare_data(config)
    save_csv(prepared.train, out_dir / "train.csv")
    save_csv(prepared.test, out_dir / "test.csv")
    if prepared.true_model is not None:
        (out_dir / "true_model.csv").write_text(
            ",".join(repr(float(v)) for v in prepared.true_model) + "\n",
            encoding="utf-8")
    print(f"wrote {len(prepared.train)} train / {len(prepared.test)} test examples "
          f"to {out_dir}")
    return 0


def _parse_seeds(raw: str) -> List[int]:
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("--seed expects comma-separated integers") from None


def _parse_values(raw: str) -> List[float]:
    try:
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("--values expects comma-separated numbers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aflbench",
        description="Byzantine-robust asynchronous federated learning benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment (all configured seeds)")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", default=None,
                       help="override run seeds, e.g. 1,2,3")

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")

    p_gen = sub.add_parser("gen-data", help="write the configured dataset as CSV")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", required=True)

    sub.add_parser("verify", help="run the property and acceptance suites")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            from .acceptance import verify_main
            return verify_main()
        config = load_config(args.config)
        if args.command == "run":
            seeds = _parse_seeds(args.seed) if args.seed else None
            return run_command(config, Path(args.out), seeds)
        if args.command == "sweep":
            return sweep_command(config, args.axis, _parse_values(args.values),
                                 Path(args.out))
        if args.command == "gen-data":
            return gen_data_command(config, Path(args.out))
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
