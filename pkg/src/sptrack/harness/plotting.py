"""PNG figures drawn next to the CSV outputs (non-interactive Agg backend)."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentOutput  # noqa: E402

STYLE = {"figure.figsize": (5.0, 3.4), "figure.dpi": 120, "axes.grid": True,
         "grid.alpha": 0.3, "font.size": 9, "legend.fontsize": 8}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-stable
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _by(rows, key):
    g = defaultdict(list)
    for r in rows:
        g[r[key]].append(r)
    return g


def plot_zs_sweep(out: ExperimentOutput, d: Path) -> List[Path]:
    paths = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for dw, rows in sorted(_by(out.tables["sweep"], "dw_min").items()):
            ns = sorted({r["N"] for r in rows})
            err = [np.mean([r["rel_mean_error"] for r in rows if r["N"] == n]) for n in ns]
            ax.loglog(ns, err, marker="o", ms=3, label=f"dw={dw:g}")
        ax.axhline(out.tables["min_N"][0]["target"], color="k", ls="--", lw=0.8)
        ax.set_xlabel("zero-shift steps N")
        ax.set_ylabel("relative mean error")
        ax.legend()
        paths.append(_save(fig, d / "zs_sweep.png"))

        fig, ax = plt.subplots()
        pts = [(m["dw_min"], m["min_N"]) for m in out.tables["min_N"] if m["min_N"] is not None]
        if pts:
            x, y = zip(*pts)
            ax.loglog(x, y, "o")
        ax.set_xlabel("granularity dw_min")
        ax.set_ylabel("minimal N")
        paths.append(_save(fig, d / "zs_min_N.png"))
    return paths


def plot_zs_floor(out: ExperimentOutput, d: Path) -> List[Path]:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for dw, rows in sorted(_by(out.tables["trajectory"], "dw_min").items()):
            ns = sorted({r["n"] for r in rows})
            err = [np.mean([r["err_sq"] for r in rows if r["n"] == n]) for n in ns]
            ax.semilogy(ns, err, lw=1, label=f"dw={dw:g}")
        ax.set_xlabel("step n")
        ax.set_ylabel("mean (W - w_sp)^2")
        ax.legend()
        return [_save(fig, d / "zs_trajectory.png")]


def plot_train(out: ExperimentOutput, d: Path) -> List[Path]:
    paths = []
    with plt.rc_context(STYLE):
        for col, label in (("w_err", "||W - W*||^2"), ("q_err", "||Q - w_sp||^2"),
                           ("loss", "f(Wbar)")):
            fig, ax = plt.subplots()
            drawn = False
            for name in sorted({n for n, _ in out.tables["records"]}):
                runs = [rows for (n, _), rows in sorted(out.tables["records"].items())
                        if n == name]
                k = np.array([r["k"] for r in runs[0]])
                vals = np.array([[r[col] for r in rows] for rows in runs], dtype=float)
                if np.all(np.isnan(vals)):
                    continue
                ax.semilogy(k, np.nanmedian(vals, axis=0), lw=1, label=name)
                drawn = True
            ax.set_xlabel("iteration k")
            ax.set_ylabel(label)
            if drawn:
                ax.legend()
            paths.append(_save(fig, d / f"train_{col}.png"))
    return paths


def plot_pulse_budget(out: ExperimentOutput, d: Path) -> List[Path]:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        groups = _by(out.tables["budget"], "name")
        names = sorted(groups)
        for i, name in enumerate(names):
            tot = [r["total_pulses"] for r in groups[name] if r.get("total_pulses") is not None]
            ax.scatter(np.full(len(tot), i), tot, s=12)
            missed = sum(1 for r in groups[name] if not r["reached"])
            if missed:
                ax.annotate(f"{missed} missed", (i, 0), xycoords=("data", "axes fraction"),
                            ha="center", va="bottom", fontsize=7)
        ax.set_xticks(range(len(names)), names)
        ax.set_ylabel("pulses to target")
        return [_save(fig, d / "pulse_budget.png")]


def plot_filter(out: ExperimentOutput, d: Path) -> List[Path]:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for eta, rows in sorted(_by(out.tables["filter"], "eta").items()):
            ax.plot([r["omega"] for r in rows], [r["analytic"] for r in rows], lw=1,
                    label=f"eta={eta:g}")
        ax.set_xlabel("omega")
        ax.set_ylabel("|H|")
        ax.legend()
        return [_save(fig, d / "filter_response.png")]


PLOTTERS = {"zs_sweep": plot_zs_sweep, "zs_floor": plot_zs_floor, "train_compare": plot_train,
            "pulse_budget": plot_pulse_budget, "filter_check": plot_filter}


def render(out: ExperimentOutput, out_dir) -> List[Path]:
    return PLOTTERS[out.kind](out, Path(out_dir))
