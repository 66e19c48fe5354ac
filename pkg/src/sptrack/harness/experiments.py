"""Experiment drivers behind the CLI subcommands.

Every driver fans its independent cells out over a process pool, then sorts
the rows by their key columns before writing, so the thread count never
changes the bytes on disk.  A cell's random stream is
``SeedSequence([seed, cell_index])`` where ``cell_index`` is the position of
the cell's granularity in the config grid.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import numpy as np

from ..devices import q_bounds, symmetric_point
from ..dsp import empirical_frequency_response, ma_frequency_response
from ..spcal import sp_error_stats, zs_cyclic, zs_stochastic
from ..trainers import RECORD_COLUMNS, run_one, size_calibration, two_stage_train
from .config import ExperimentConfig
from .csvio import write_csv

SWEEP_COLUMNS = ("dw_min", "N", "seed", "mean_offset", "std_offset", "rel_mean_error",
                 "mean_G_sq", "rel_undefined")
MIN_N_COLUMNS = ("dw_min", "seed", "min_N", "target")
FLOOR_COLUMNS = ("dw_min", "seed", "steps", "running_mean_G_sq", "tail_mean_G_sq",
                 "tail_err_sq", "mu_q", "q_max")
TRAJ_COLUMNS = ("dw_min", "seed", "n", "err_sq", "mu_q")
SUMMARY_COLUMNS = ("name", "algorithm", "seed", "K", "final_loss", "final_w_err",
                   "final_q_err", "final_pq_gap", "final_gp_sq", "E_K", "pulses",
                   "calibration_pulses", "syncs", "flips")
BUDGET_COLUMNS = ("name", "algorithm", "seed", "N_zs", "calibration_pulses",
                  "training_pulses", "total_pulses", "hit_step", "bl_pulses", "reached")
FILTER_COLUMNS = ("eta", "omega", "analytic", "empirical", "abs_err")


@dataclass
class ExperimentOutput:
    kind: str
    files: Dict[str, Path] = field(default_factory=dict)
    tables: Dict[str, List[Dict]] = field(default_factory=dict)


def cell_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(index)])


def fan_out(fn: Callable, tasks: Sequence, threads: int = 1) -> List:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_star, [(fn, t) for t in tasks]))


def _star(item):
    fn, args = item
    return fn(*args)


# -- zero-shift sweep ---------------------------------------------------------

def _sweep_cell(cfg: ExperimentConfig, seed: int, index: int):
    dw = cfg.sweep.dw_grid[index]
    rows_, cols_ = cfg.tile
    tile = cfg.device.build(rows_, cols_, cell_seed(seed, index), dw_min=dw)
    truth = symmetric_point(tile)
    grid = sorted(int(n) for n in cfg.sweep.N_grid)
    # one trajectory per cell, read at every grid budget
    if cfg.sweep.method == "cyclic":
        est = zs_cyclic(tile, grid[-1], checkpoints=grid)
        snaps = {n: est.checkpoints[2 * n] for n in grid}
    else:
        est = zs_stochastic(tile, grid[-1], checkpoints=grid)
        snaps = est.checkpoints
    out, min_n = [], None
    for n in grid:
        st = sp_error_stats(snaps[n], truth, tile)
        out.append(dict(dw_min=dw, N=n, seed=seed, **st.as_dict()))
        if min_n is None and st.rel_mean_error <= cfg.sweep.target:
            min_n = n
    return out, dict(dw_min=dw, seed=seed, min_N=min_n, target=cfg.sweep.target)


def zs_sweep(cfg: ExperimentConfig, out_dir, threads: int = 1) -> ExperimentOutput:
    tasks = [(cfg, s, i) for s in cfg.seeds for i in range(len(cfg.sweep.dw_grid))]
    res = fan_out(_sweep_cell, tasks, threads)
    rows = [r for cell, _ in res for r in cell]
    mins = [m for _, m in res]
    out = ExperimentOutput("zs_sweep")
    d = Path(out_dir)
    out.files["sweep"] = write_csv(d / "zs_sweep.csv", SWEEP_COLUMNS, rows,
                                   sort_by=("dw_min", "seed", "N"))
    out.files["min_N"] = write_csv(d / "zs_min_N.csv", MIN_N_COLUMNS, mins,
                                   sort_by=("dw_min", "seed"))
    out.tables = {"sweep": rows, "min_N": mins}
    return out


# -- zero-shift floor and last-iterate decay ------------------------------------

def _floor_cell(cfg: ExperimentConfig, seed: int, index: int):
    dw = cfg.floor.dw_grid[index]
    rows_, cols_ = cfg.tile
    tile = cfg.device.build(rows_, cols_, cell_seed(seed, index), dw_min=dw)
    truth = symmetric_point(tile)
    mu_q = float(np.mean(tile.G_slope()))
    q_max = q_bounds(tile)[1]
    steps = int(math.ceil(cfg.floor.steps_per_inverse_dw / dw))
    chunk = max(1, int(cfg.floor.trajectory_every))
    half = steps // 2
    total = tail = tail_err = 0.0
    n_tail = n_tail_err = 0
    traj = [dict(dw_min=dw, seed=seed, n=0, err_sq=float(np.mean((tile.weights - truth) ** 2)),
                 mu_q=mu_q)]
    n = 0
    while n < steps:
        m = min(chunk, steps - n)
        est = zs_stochastic(tile, m)
        total += est.running_mean_G_sq * m
        if n >= half:
            tail += est.running_mean_G_sq * m
            n_tail += m
        n += m
        err = float(np.mean((tile.weights - truth) ** 2))
        traj.append(dict(dw_min=dw, seed=seed, n=n, err_sq=err, mu_q=mu_q))
        if n > half:
            tail_err += err
            n_tail_err += 1
    row = dict(dw_min=dw, seed=seed, steps=steps, running_mean_G_sq=total / steps,
               tail_mean_G_sq=tail / max(n_tail, 1), tail_err_sq=tail_err / max(n_tail_err, 1),
               mu_q=mu_q, q_max=q_max)
    return row, traj


def zs_floor(cfg: ExperimentConfig, out_dir, threads: int = 1) -> ExperimentOutput:
    tasks = [(cfg, s, i) for s in cfg.seeds for i in range(len(cfg.floor.dw_grid))]
    res = fan_out(_floor_cell, tasks, threads)
    rows = [r for r, _ in res]
    traj = [t for _, ts in res for t in ts]
    out = ExperimentOutput("zs_floor")
    d = Path(out_dir)
    out.files["floor"] = write_csv(d / "zs_floor.csv", FLOOR_COLUMNS, rows,
                                   sort_by=("dw_min", "seed"))
    out.files["trajectory"] = write_csv(d / "zs_trajectory.csv", TRAJ_COLUMNS, traj,
                                        sort_by=("dw_min", "seed", "n"))
    out.tables = {"floor": rows, "trajectory": traj}
    return out


# -- training comparison ------------------------------------------------------

def _train_cell(cfg: ExperimentConfig, spec_index: int, seed: int):
    spec = cfg.algorithms[spec_index]
    tcfg = replace(spec.trainer(cfg.trainer), decimate=cfg.decimate)
    rec = run_one(spec.algorithm, cfg.objective.build(), tcfg, seed, cfg.device)
    return spec.name, rec


def _summary_row(name, rec):
    return dict(name=name, algorithm=rec.algorithm, seed=rec.seed, K=rec.K,
                final_loss=rec.final("loss"), final_w_err=rec.final("w_err"),
                final_q_err=rec.final("q_err"), final_pq_gap=rec.final("pq_gap"),
                final_gp_sq=rec.final("gp_sq"), E_K=rec.E_K, pulses=rec.total_pulses,
                calibration_pulses=rec.calibration_pulses, syncs=rec.syncs, flips=rec.flips)


def train_compare(cfg: ExperimentConfig, out_dir, threads: int = 1) -> ExperimentOutput:
    tasks = [(cfg, j, s) for j in range(len(cfg.algorithms)) for s in cfg.seeds]
    res = fan_out(_train_cell, tasks, threads)
    out = ExperimentOutput("train_compare")
    d = Path(out_dir)
    summary = []
    records = {}
    for name, rec in res:
        rows = list(rec.rows())
        out.files[f"{name}/{rec.seed}"] = write_csv(
            d / "records" / f"{name}__seed{rec.seed}.csv", RECORD_COLUMNS, rows)
        records[(name, rec.seed)] = rows
        summary.append(_summary_row(name, rec))
    out.files["summary"] = write_csv(d / "train_summary.csv", SUMMARY_COLUMNS, summary,
                                     sort_by=("name", "seed"))
    out.tables = {"summary": summary, "records": records}
    return out


# -- pulse budget ---------------------------------------------------------------

def _budget_cell(cfg: ExperimentConfig, spec_index: int, seed: int):
    spec = cfg.algorithms[spec_index]
    b = cfg.budget
    device = replace(cfg.device, dw_min=b.dw_min)
    objective = cfg.objective.build()
    tcfg = replace(spec.trainer(cfg.trainer), decimate=cfg.decimate)
    n_zs = 0
    if spec.algorithm == "two_stage":
        n_zs, _, _ = size_calibration(objective, device, seed, b.N_grid, b.sp_tol)
        rec = two_stage_train(objective, tcfg, N_zs=n_zs, seed=seed, device=device,
                              target=b.target)
    else:
        rec = run_one(spec.algorithm, objective, tcfg, seed, device, target=b.target)
    reached = rec.hit_step is not None
    tiles = 1 if spec.algorithm == "analog_sgd" else 2
    row = dict(name=spec.name, algorithm=spec.algorithm, seed=seed, N_zs=n_zs,
               calibration_pulses=rec.calibration_pulses, reached=reached,
               hit_step=rec.hit_step)
    if reached:
        row["training_pulses"] = rec.hit_pulses - rec.calibration_pulses
        row["total_pulses"] = rec.hit_pulses
        row["bl_pulses"] = rec.calibration_pulses + b.bl * rec.hit_step * tiles * objective.D
    return row


def pulse_budget(cfg: ExperimentConfig, out_dir, threads: int = 1) -> ExperimentOutput:
    tasks = [(cfg, j, s) for j in range(len(cfg.algorithms)) for s in cfg.seeds]
    rows = fan_out(_budget_cell, tasks, threads)
    names = [s.name for s in cfg.algorithms]
    comp = []
    for seed in cfg.seeds:
        row = {"seed": seed}
        best, best_total = None, math.inf
        for r in rows:
            if r["seed"] != seed:
                continue
            total = r.get("total_pulses")
            row[f"total_{r['name']}"] = total
            if total is not None and total < best_total:
                best, best_total = r["name"], total
        row["fewest_pulses"] = best
        comp.append(row)
    out = ExperimentOutput("pulse_budget")
    d = Path(out_dir)
    out.files["budget"] = write_csv(d / "pulse_budget.csv", BUDGET_COLUMNS, rows,
                                    sort_by=("name", "seed"))
    out.files["comparison"] = write_csv(d / "pulse_comparison.csv",
                                        ["seed"] + [f"total_{n}" for n in names] + ["fewest_pulses"],
                                        comp, sort_by=("seed",))
    out.tables = {"budget": rows, "comparison": comp}
    return out


# -- filter check -------------------------------------------------------------

def filter_check(cfg: ExperimentConfig, out_dir, threads: int = 1) -> ExperimentOutput:
    rows = []
    for eta in cfg.filter.etas:
        for omega, mag in empirical_frequency_response(eta, cfg.filter.n_freq):
            ref = float(ma_frequency_response(eta, omega))
            rows.append(dict(eta=eta, omega=omega, analytic=ref, empirical=mag,
                             abs_err=abs(ref - mag)))
    out = ExperimentOutput("filter_check")
    out.files["filter"] = write_csv(Path(out_dir) / "filter_response.csv", FILTER_COLUMNS,
                                    rows, sort_by=("eta", "omega"))
    out.tables = {"filter": rows}
    return out


DRIVERS = {"zs_sweep": zs_sweep, "zs_floor": zs_floor, "train_compare": train_compare,
           "pulse_budget": pulse_budget, "filter_check": filter_check}


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> ExperimentOutput:
    return DRIVERS[cfg.kind](cfg, out_dir if out_dir is not None else cfg.out, threads)
