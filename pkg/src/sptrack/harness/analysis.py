"""Fits that turn experiment CSVs into pass/fail verdicts."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..errors import AnalysisError
from .csvio import read_csv, write_csv

CHECKS = ("granularity_slope", "floor_ratio", "geometric_rate")
ANALYSIS_COLUMNS = ("check", "key", "value", "ci_low", "ci_high", "expected", "band_low",
                    "band_high", "passed", "n_points")


@dataclass
class AnalysisResult:
    check: str
    value: float
    band: Tuple[float, float]
    passed: bool
    points: List[Tuple[float, float]]
    ci: Tuple[float, float] = (float("nan"), float("nan"))
    expected: float = float("nan")
    key: str = ""
    details: Dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        where = f"[{self.key}] " if self.key else ""
        return (f"{tag} {self.check} {where}value={self.value:.4g} "
                f"band=[{self.band[0]:.4g}, {self.band[1]:.4g}] n={len(self.points)}")

    def row(self) -> Dict:
        return dict(check=self.check, key=self.key, value=self.value, ci_low=self.ci[0],
                    ci_high=self.ci[1], expected=self.expected, band_low=self.band[0],
                    band_high=self.band[1], passed=self.passed, n_points=len(self.points))


def _need(n, what, k=3):
    if n < k:
        raise AnalysisError(f"{what}: need at least {k} points, got {n}")


def loglog_fit(x, y):
    """Least-squares slope of log y on log x with a 95% interval."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    _need(len(x), "log-log fit")
    fit = stats.linregress(np.log(x), np.log(y))
    if len(x) > 2:
        half = stats.t.ppf(0.975, len(x) - 2) * fit.stderr
    else:
        half = float("nan")
    return fit.slope, (fit.slope - half, fit.slope + half), fit


def granularity_slope(dw, N, band=(-1.3, -0.7)) -> AnalysisResult:
    """Slope of log(minimal budget) against log(granularity); unreached cells are dropped."""
    pts = [(float(d), float(n)) for d, n in zip(dw, N)
           if n is not None and np.isfinite(n) and n > 0]
    _need(len(pts), "granularity_slope")
    if len({d for d, _ in pts}) < 2:
        raise AnalysisError("granularity_slope: need at least two distinct granularities")
    x, y = zip(*pts)
    slope, ci, _ = loglog_fit(x, y)
    return AnalysisResult("granularity_slope", float(slope), tuple(band),
                          bool(band[0] <= slope <= band[1]), pts, ci=ci, expected=-1.0,
                          details={"dropped": len(dw) - len(pts)})


def floor_ratio(dw, plateau, band=(1.4, 2.8)) -> AnalysisResult:
    """Ratios of mean plateau between adjacent granularities (coarser over finer)."""
    pts = [(float(d), float(p)) for d, p in zip(dw, plateau)]
    _need(len(pts), "floor_ratio")
    groups = defaultdict(list)
    for d, p in pts:
        groups[d].append(p)
    levels = sorted(groups, reverse=True)
    if len(levels) < 2:
        raise AnalysisError("floor_ratio: need at least two distinct granularities")
    means = [float(np.mean(groups[d])) for d in levels]
    ratios = [means[i] / means[i + 1] for i in range(len(levels) - 1)]
    ok = all(band[0] <= r <= band[1] for r in ratios)
    return AnalysisResult("floor_ratio", float(np.mean(ratios)), tuple(band), ok, pts,
                          ci=(min(ratios), max(ratios)), expected=2.0,
                          details={"granularities": levels, "plateaus": means,
                                   "ratios": ratios})


def geometric_rate(n, err, mu_q: float, dw: float, floor: Optional[float] = None,
                   factor: float = 2.0, floor_margin: float = 10.0) -> AnalysisResult:
    """Per-step decay rate of the squared error, fitted where it is above ``floor_margin`` x floor.

    ``floor`` defaults to the mean error over the last half of the points.
    The fitted rate passes when it is within ``factor`` of 2*mu_q*dw.
    """
    n, err = np.asarray(n, float), np.asarray(err, float)
    order = np.argsort(n)
    n, err = n[order], err[order]
    if floor is None:
        floor = float(np.mean(err[len(err) // 2:])) if len(err) else float("nan")
    keep = err > floor_margin * floor
    # only the initial transient: stop at the first point below the cutoff
    if keep.any() and not keep.all():
        first_low = int(np.argmin(keep))
        keep[first_low:] = False
    pts = list(zip(n[keep].tolist(), err[keep].tolist()))
    _need(len(pts), "geometric_rate")
    fit = stats.linregress(n[keep], np.log(err[keep]))
    rate = -fit.slope
    expected = 2.0 * mu_q * dw
    half = stats.t.ppf(0.975, len(pts) - 2) * fit.stderr if len(pts) > 2 else float("nan")
    ok = bool(expected / factor <= rate <= expected * factor)
    return AnalysisResult("geometric_rate", float(rate), (expected / factor, expected * factor),
                          ok, pts, ci=(rate - half, rate + half), expected=expected,
                          details={"floor": floor})


# -- reading experiment outputs -----------------------------------------------------

def _find(inputs: Sequence, name: str) -> Path:
    for p in inputs:
        p = Path(p)
        if p.is_dir() and (p / name).exists():
            return p / name
        if p.is_file() and p.name == name:
            return p
    raise AnalysisError(f"no {name} among the inputs")


def _cols(rows, names, where):
    if not rows:
        raise AnalysisError(f"{where} is empty")
    missing = [c for c in names if c not in rows[0]]
    if missing:
        raise AnalysisError(f"{where} lacks columns {missing}")


def analyze(inputs: Sequence, check: str) -> List[AnalysisResult]:
    if check not in CHECKS:
        raise AnalysisError(f"unknown check {check!r}; expected one of {CHECKS}")
    if check == "granularity_slope":
        rows = read_csv(_find(inputs, "zs_min_N.csv"))
        _cols(rows, ("dw_min", "min_N"), "zs_min_N.csv")
        return [granularity_slope([r["dw_min"] for r in rows], [r["min_N"] for r in rows])]
    rows = read_csv(_find(inputs, "zs_floor.csv"))
    _cols(rows, ("dw_min", "tail_mean_G_sq"), "zs_floor.csv")
    if check == "floor_ratio":
        return [floor_ratio([r["dw_min"] for r in rows], [r["tail_mean_G_sq"] for r in rows])]
    traj = read_csv(_find(inputs, "zs_trajectory.csv"))
    _cols(traj, ("dw_min", "n", "err_sq", "mu_q"), "zs_trajectory.csv")
    out = []
    for dw in sorted({r["dw_min"] for r in traj}, reverse=True):
        sub = [r for r in traj if r["dw_min"] == dw]
        ns = sorted({r["n"] for r in sub})
        mean_err = [float(np.mean([r["err_sq"] for r in sub if r["n"] == k])) for k in ns]
        mu_q = float(np.mean([r["mu_q"] for r in sub]))
        floors = [r["tail_err_sq"] for r in rows if r["dw_min"] == dw and "tail_err_sq" in r]
        floor = float(np.mean(floors)) if floors else None
        res = geometric_rate(ns, mean_err, mu_q, dw, floor=floor)
        res.key = f"dw_min={dw:g}"
        out.append(res)
    return out


def write_results(path, results: Sequence[AnalysisResult]) -> Path:
    return write_csv(path, ANALYSIS_COLUMNS, [r.row() for r in results])
