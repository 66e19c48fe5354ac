"""Command-line entry point: ``sptrack <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 analysis error, 3 a
``--check`` verdict failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..errors import AnalysisError, ConfigError
from . import analysis
from .config import ExperimentConfig, dump, load, with_overrides
from .experiments import ExperimentOutput, run_experiment

log = logging.getLogger("sptrack")

SUBCOMMAND_KINDS = {"calibrate": ("zs_sweep", "zs_floor"), "train": ("train_compare",),
                    "pulse-budget": ("pulse_budget",), "filter-check": ("filter_check",)}


def _seeds(text: str):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"--seeds must be a comma-separated list of integers: {text!r}") from exc


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--decimate", type=int, help="keep every n-th record row")
    p.add_argument("--check", action="store_true", help="exit 3 when the built-in check fails")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figures")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sptrack", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("calibrate", "zero-shift sweeps (zs_sweep or zs_floor configs)"),
                        ("train", "compare training algorithms"),
                        ("pulse-budget", "pulses needed to reach a target loss"),
                        ("filter-check", "moving-average frequency response")):
        _common(sub.add_parser(name, help=help_))
    an = sub.add_parser("analyze", help="fit scaling laws on experiment CSVs")
    an.add_argument("inputs", nargs="+", type=Path, help="output directories or CSV files")
    an.add_argument("--check", required=True, choices=analysis.CHECKS)
    an.add_argument("--out", type=Path, help="write analysis.csv here")
    return ap


def _resolve_config(args) -> ExperimentConfig:
    kinds = SUBCOMMAND_KINDS[args.command]
    cfg = load(args.config) if args.config else ExperimentConfig(kind=kinds[0])
    if cfg.kind not in kinds:
        raise ConfigError(f"'{args.command}' runs {'/'.join(kinds)} configs, got {cfg.kind!r}")
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return with_overrides(cfg, out=str(args.out) if args.out else None,
                          seeds=_seeds(args.seeds) if args.seeds else None,
                          decimate=args.decimate)


def builtin_checks(out: ExperimentOutput, cfg: ExperimentConfig) -> List[analysis.AnalysisResult]:
    t = out.tables
    if out.kind == "zs_sweep":
        return [analysis.granularity_slope([m["dw_min"] for m in t["min_N"]],
                                           [m["min_N"] for m in t["min_N"]])]
    if out.kind == "zs_floor":
        return analysis.analyze([cfg.out], "floor_ratio") + analysis.analyze([cfg.out],
                                                                             "geometric_rate")
    if out.kind == "filter_check":
        worst = max(r["abs_err"] for r in t["filter"])
        pts = [(r["omega"], r["abs_err"]) for r in t["filter"]]
        return [analysis.AnalysisResult("filter_max_abs_err", worst, (0.0, cfg.filter.tol),
                                        worst <= cfg.filter.tol, pts)]
    if out.kind == "pulse_budget":
        comp = t["comparison"]
        wins = [r["fewest_pulses"] == "rider" for r in comp]
        frac = float(np.mean(wins))
        return [analysis.AnalysisResult("rider_fewest_pulses", frac, (0.8, 1.0), frac >= 0.8,
                                        [(r["seed"], float(w)) for r, w in zip(comp, wins)])]
    summ = t["summary"]
    by = {}
    for r in summ:
        by.setdefault(r["algorithm"], []).append(r["final_w_err"])
    if "analog_sgd" not in by or "rider" not in by:
        raise AnalysisError("train check compares rider against analog_sgd; list both")
    ratio = float(np.median(by["rider"]) / np.median(by["analog_sgd"]))
    return [analysis.AnalysisResult("rider_over_sgd_w_err", ratio, (0.0, 1.0 / 3.0),
                                    ratio <= 1.0 / 3.0, [(0.0, v) for v in by["rider"]])]


def _run(args) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(dump(cfg))
    log.info("running %s into %s", cfg.kind, out_dir)
    out = run_experiment(cfg, out_dir, args.threads)
    for name, path in sorted(out.files.items()):
        log.info("wrote %s", path)
    if not args.no_plot:
        from .plotting import render
        for p in render(out, out_dir):
            log.info("figure %s", p)
    print(f"{cfg.kind}: {len(out.files)} CSV files in {out_dir}")
    if args.check:
        results = builtin_checks(out, cfg)
        analysis.write_results(out_dir / "check.csv", results)
        for r in results:
            print(r.line())
        if not all(r.passed for r in results):
            return 3
    return 0


def _analyze(args) -> int:
    results = analysis.analyze(args.inputs, args.check)
    for r in results:
        print(r.line())
    if args.out:
        analysis.write_results(Path(args.out) / "analysis.csv", results)
    return 0 if all(r.passed for r in results) else 3


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "analyze":
            return _analyze(args)
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
