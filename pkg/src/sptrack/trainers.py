"""Training on analog tiles: plain analog SGD, RIDER, E-RIDER and the two-stage baseline.

RIDER keeps three sequences.  P and W live on analog tiles; Q is digital:

    Wbar_k  = W_k + gamma * (P_k - Q_k)
    P_{k+1} = AnalogUpdate(P_k, -alpha * grad f(Wbar_k; xi_k))
    Q_{k+1} = (1 - eta) Q_k + eta P_{k+1}
    W_{k+1} = AnalogUpdate(W_k, beta * (P_{k+1} - Q_k))

E-RIDER multiplies the residual, the gradient and the W increment by a
random sign c_k, and reads Q through an analog copy Qt that is reprogrammed
from the digital Q when c_k flips.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .devices import AnalogTile, DeviceSpec, apply_update, symmetric_point
from .dsp import ChopperState
from .errors import ConfigError
from .spcal import OffsetModel, make_reference, zs_stochastic

ALGORITHMS = ("analog_sgd", "rider", "erider", "two_stage")
UPDATE_MODES = ("ideal", "pulsed")
SYNC_POLICIES = ("on_flip", "every_step", "never")

RECORD_COLUMNS = ("k", "loss", "loss_w", "w_err", "q_err", "pq_gap", "gp_sq", "pulses")


@dataclass(frozen=True)
class TrainerConfig:
    """Step sizes and run options.

    Unset rates follow the unit-constant templates alpha = 1/sqrt(K),
    beta = alpha*gamma*mu and eta = alpha*mu; see :meth:`resolved`.
    """

    K: int = 1000
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma_mix: float = 1.0
    eta: Optional[float] = None
    chop_p: float = 0.0
    update_mode: str = "pulsed"
    sync_policy: str = "on_flip"
    decimate: int = 1

    def __post_init__(self):
        if self.K < 0 or int(self.K) != self.K:
            raise ConfigError("K must be a nonnegative integer")
        if self.update_mode not in UPDATE_MODES:
            raise ConfigError(f"update_mode must be one of {UPDATE_MODES}")
        if self.sync_policy not in SYNC_POLICIES:
            raise ConfigError(f"sync_policy must be one of {SYNC_POLICIES}")
        if not 0.0 <= self.chop_p < 1.0:
            raise ConfigError("chop_p must lie in [0, 1)")
        if self.gamma_mix <= 0:
            raise ConfigError("gamma_mix must be positive")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ConfigError("eta must lie in (0, 1]")
        if self.decimate < 1:
            raise ConfigError("decimate must be >= 1")

    def resolved(self, mu: float) -> "TrainerConfig":
        alpha = self.alpha if self.alpha is not None else 1.0 / math.sqrt(max(self.K, 1))
        beta = self.beta if self.beta is not None else alpha * self.gamma_mix * mu
        eta = self.eta if self.eta is not None else min(1.0, alpha * mu)
        return replace(self, alpha=alpha, beta=beta, eta=eta)


@dataclass
class TrainerState:
    W: AnalogTile
    P: Optional[AnalogTile] = None
    Qt: Optional[AnalogTile] = None
    Q: Optional[np.ndarray] = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    chopper: Optional[ChopperState] = None
    c: float = 1.0
    k: int = 0
    syncs: int = 0
    calibration_pulses: int = 0
    sp_truth: Optional[np.ndarray] = None

    @property
    def tiles(self) -> List[AnalogTile]:
        return [t for t in (self.P, self.W, self.Qt) if t is not None]

    def total_pulses(self) -> int:
        return sum(t.pulse_counter for t in self.tiles)

    def wbar(self, gamma_mix: float, c: Optional[float] = None, q_ref=None) -> np.ndarray:
        if self.P is None:
            return self.W.weights
        c = self.c if c is None else c
        q_ref = self.Q if q_ref is None else q_ref
        return self.W.weights + gamma_mix * c * (self.P.weights - q_ref)


@dataclass
class RunRecord:
    """Per-iteration metrics of one run.

    Row k describes the state before step k; there are K+1 rows (or every
    ``decimate``-th row plus the last).  ``E_K`` averages
    ||W_k - W*||^2 + ||P_k - Q_k||^2 + ||G_p(P_k)||^2 over k < K using every
    step, not just the recorded rows.
    """

    algorithm: str
    seed: int
    K: int
    columns: Dict[str, np.ndarray]
    E_K: float
    pulses_by_tile: Dict[str, int]
    calibration_pulses: int = 0
    syncs: int = 0
    flips: int = 0
    hit_step: Optional[int] = None
    hit_pulses: Optional[int] = None

    @property
    def n_rows(self) -> int:
        return len(self.columns["k"])

    def final(self, name: str) -> float:
        return float(self.columns[name][-1])

    @property
    def total_pulses(self) -> int:
        return int(self.columns["pulses"][-1])

    def rows(self):
        for i in range(self.n_rows):
            yield {c: self.columns[c][i] for c in RECORD_COLUMNS}


def _residual_step(state: TrainerState, objective, cfg: TrainerConfig, c: float,
                   q_ref: np.ndarray, update_q: bool):
    P, W = state.P, state.W
    wbar = W.weights + cfg.gamma_mix * c * (P.weights - q_ref)
    g = objective.grad(wbar.ravel(), state.rng).reshape(P.shape)
    apply_update(P, -cfg.alpha * c * g, cfg.update_mode)
    p_new = P.weights
    if update_q:
        q_new = (1.0 - cfg.eta) * state.Q + cfg.eta * p_new
    apply_update(W, cfg.beta * c * (p_new - q_ref), cfg.update_mode)
    if update_q:
        state.Q = q_new
    state.k += 1
    return state


def analog_sgd_step(state: TrainerState, objective, cfg: TrainerConfig, rng=None):
    """W_{k+1} = AnalogUpdate(W_k, -alpha * grad f(W_k; xi_k))."""
    rng = state.rng if rng is None else rng
    W = state.W
    g = objective.grad(W.weights.ravel(), rng).reshape(W.shape)
    apply_update(W, -cfg.alpha * g, cfg.update_mode)
    state.k += 1
    return state


def rider_step(state: TrainerState, objective, cfg: TrainerConfig, rng=None):
    """One RIDER iteration; the residual reads the digital Q directly."""
    if rng is not None:
        state.rng = rng
    return _residual_step(state, objective, cfg, 1.0, state.Q, update_q=True)


def erider_step(state: TrainerState, objective, cfg: TrainerConfig, rng=None):
    """One E-RIDER iteration: draw the chopper, sync Qt if required, then update."""
    if rng is not None:
        state.rng = rng
    c_prev = state.c
    c = state.chopper.step()
    state.c = c
    if cfg.sync_policy == "every_step" or (cfg.sync_policy == "on_flip" and c != c_prev):
        program_tile(state.Qt, state.Q)
        state.syncs += 1
    return _residual_step(state, objective, cfg, c, state.Qt.weights, update_q=True)


def two_stage_step(state: TrainerState, objective, cfg: TrainerConfig, rng=None):
    """Residual-learning step with the reference Q frozen."""
    if rng is not None:
        state.rng = rng
    return _residual_step(state, objective, cfg, 1.0, state.Q, update_q=False)


def program_tile(tile: AnalogTile, values) -> None:
    """Exact digital-to-analog write (no pulses, no write noise)."""
    tile.weights = np.clip(np.asarray(values, dtype=float).reshape(tile.shape),
                           tile.clip_lo, tile.clip_hi)


STEPS = {"analog_sgd": analog_sgd_step, "rider": rider_step,
         "erider": erider_step, "two_stage": two_stage_step}


def _streams(seed):
    return np.random.SeedSequence(seed).spawn(6)


def size_calibration(objective, device: DeviceSpec, seed: int, N_grid: Sequence[int],
                     tol: float):
    """Smallest N in ``N_grid`` whose zero-shift estimate has mean squared SP error <= tol.

    The P tile is rebuilt exactly as a two-stage run with this seed builds it
    and its pulse stream is cloned, so the estimate found here is the one that
    run will obtain.  Returns ``(N, error, reached)``; when no grid value is
    good enough the largest N is returned with ``reached = False``.
    """
    grid = sorted(int(n) for n in N_grid)
    if not grid:
        raise ConfigError("calibration grid is empty")
    P = device.build(1, objective.D, _streams(seed)[0])
    truth = symmetric_point(P)
    est = zs_stochastic(P.copy(), grid[-1], checkpoints=grid)
    err = float("nan")
    for n in grid:
        err = float(np.mean((est.checkpoints[n] - truth) ** 2))
        if err <= tol:
            return n, err, True
    return grid[-1], err, False


def init_state(algorithm: str, objective, device: DeviceSpec, seed: int,
               cfg: TrainerConfig, N_zs: int = 0, offset: Optional[OffsetModel] = None,
               p_device: Optional[DeviceSpec] = None) -> TrainerState:
    """Fresh tiles and RNG streams for one run.

    The seed is split into independent streams for the P, W and Qt tiles,
    gradient sampling, the chopper and the reference offset, so enabling one
    feature never shifts the random numbers seen by another.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    ss_p, ss_w, ss_qt, ss_grad, ss_chop, ss_ref = _streams(seed)
    D = objective.D
    W = device.build(1, D, ss_w)
    state = TrainerState(W=W, rng=np.random.default_rng(ss_grad))
    if algorithm == "analog_sgd":
        return state

    P = (p_device or device).build(1, D, ss_p)
    state.P = P
    state.sp_truth = symmetric_point(P)
    if algorithm == "two_stage":
        if offset is not None:
            state.Q = make_reference(state.sp_truth, offset, np.random.default_rng(ss_ref))
        else:
            if N_zs > 0:
                before = P.pulse_counter
                zs_stochastic(P, N_zs)
                state.calibration_pulses = P.pulse_counter - before
                P.pulse_counter = before
            state.Q = P.weights.copy()
    else:
        state.Q = P.weights.copy()
    if algorithm == "erider":
        # Qt shares P's geometry: Q is a convex mix of P states, so writes never clip
        state.Qt = P.copy(seed=ss_qt)
        state.Qt.pulse_counter = 0
        program_tile(state.Qt, state.Q)
        state.chopper = ChopperState(p=cfg.chop_p, rng=np.random.default_rng(ss_chop))
    return state


class _Recorder:
    def __init__(self, K, decimate):
        n = K // decimate + 2
        self.buf = {c: np.empty(n) for c in RECORD_COLUMNS}
        self.n = 0
        self.decimate = decimate
        self.ek_sum = 0.0
        self.ek_count = 0

    def observe(self, state: TrainerState, objective, cfg, K, force=False):
        k = state.k
        W = state.W.weights.ravel()
        w_err = float(np.sum((W - objective.w_star) ** 2))
        if state.P is not None:
            p = state.P.weights
            q_ref = state.Qt.weights if state.Qt is not None else state.Q
            wbar = state.wbar(cfg.gamma_mix, q_ref=q_ref).ravel()
            q_err = float(np.sum((state.Q - state.sp_truth) ** 2))
            pq_gap = float(np.sum((p - state.Q) ** 2))
            gp = state.P.G()
            gp_sq = float(np.sum(gp * gp))
            loss = objective.loss(wbar)
        else:
            q_err = pq_gap = gp_sq = float("nan")
            loss = None
        loss_w = objective.loss(W)
        if loss is None:
            loss = loss_w
        if k < K or K == 0:
            self.ek_sum += w_err + (0.0 if state.P is None else pq_gap + gp_sq)
            self.ek_count += 1
        if force or k % self.decimate == 0:
            i = self.n
            if i >= len(self.buf["k"]):
                for c in RECORD_COLUMNS:
                    self.buf[c] = np.resize(self.buf[c], 2 * i)
            vals = (k, loss, loss_w, w_err, q_err, pq_gap, gp_sq,
                    state.total_pulses() + state.calibration_pulses)
            for c, v in zip(RECORD_COLUMNS, vals):
                self.buf[c][i] = v
            self.n += 1
        return loss

    def columns(self):
        cols = {c: self.buf[c][:self.n].copy() for c in RECORD_COLUMNS}
        cols["k"] = cols["k"].astype(np.int64)
        cols["pulses"] = cols["pulses"].astype(np.int64)
        return cols


def run_one(algorithm: str, objective, cfg: TrainerConfig, seed: int,
            device: Optional[DeviceSpec] = None, N_zs: int = 0,
            offset: Optional[OffsetModel] = None, target: Optional[float] = None) -> RunRecord:
    """Run K steps of one algorithm from a fresh seeded state.

    ``target`` records the first row whose loss at Wbar is at or below it
    (``hit_step``) and the cumulative pulse count there, calibration included.
    """
    device = device or DeviceSpec()
    cfg = cfg.resolved(objective.mu)
    state = init_state(algorithm, objective, device, seed, cfg, N_zs=N_zs, offset=offset)
    step = STEPS[algorithm]
    rec = _Recorder(cfg.K, cfg.decimate)
    hit_step = hit_pulses = None
    K = cfg.K
    for k in range(K + 1):
        last = k == K
        loss = rec.observe(state, objective, cfg, K, force=last)
        if target is not None and hit_step is None and loss <= target:
            hit_step = k
            hit_pulses = state.total_pulses() + state.calibration_pulses
        if last:
            break
        try:
            step(state, objective, cfg)
        except Exception as exc:  # add run context, keep the original cause
            raise RuntimeError(f"{algorithm} seed={seed} step={k}: {exc}") from exc

    E_K = rec.ek_sum / rec.ek_count if rec.ek_count else float("nan")
    names = {"P": state.P, "W": state.W, "Qt": state.Qt}
    return RunRecord(
        algorithm=algorithm, seed=int(seed), K=K, columns=rec.columns(), E_K=E_K,
        pulses_by_tile={n: t.pulse_counter for n, t in names.items() if t is not None},
        calibration_pulses=state.calibration_pulses, syncs=state.syncs,
        flips=state.chopper.flips if state.chopper is not None else 0,
        hit_step=hit_step, hit_pulses=hit_pulses)


def run(algorithm: str, objective, config: TrainerConfig, seeds: Sequence[int],
        device: Optional[DeviceSpec] = None, N_zs: int = 0,
        offset: Optional[OffsetModel] = None, target: Optional[float] = None) -> List[RunRecord]:
    """One :class:`RunRecord` per seed; each run depends only on its own seed."""
    return [run_one(algorithm, objective, config, s, device, N_zs, offset, target)
            for s in seeds]


def two_stage_train(objective, config: TrainerConfig, N_zs: int = 0,
                    offset: Optional[OffsetModel] = None, seed: int = 0,
                    device: Optional[DeviceSpec] = None,
                    target: Optional[float] = None) -> RunRecord:
    """Zero-shift the P device for ``N_zs`` steps (or draw an offset reference), freeze Q, train."""
    if N_zs < 0:
        raise ConfigError("N_zs must be nonnegative")
    return run_one("two_stage", objective, config, seed, device, N_zs, offset, target)


def replay_q(p_sequence, q0, eta: float) -> np.ndarray:
    """Recompute the digital moving average from a logged P sequence."""
    q = np.array(q0, dtype=float)
    out = [q.copy()]
    for p in p_sequence:
        q = (1.0 - eta) * q + eta * np.asarray(p)
        out.append(q.copy())
    return np.array(out)


# 0.01..0.99 plus 1 - 10^-j: the shrinking rates form (threshold, 1), which
# gets arbitrarily thin near 1 when P - target and P - Q are nearly orthogonal
SHRINK_GRID = np.union1d(np.arange(1, 100) / 100, 1.0 - 10.0 ** -np.arange(3, 13))


def shrink_search(p_next, q, target, etas=None):
    """Grid search for the averaging rate that brings the new Q closest to ``target``.

    Returns ``(eta, ||Q_new - target||^2, ||p_next - target||^2)`` for the
    best eta in ``etas`` (default ``SHRINK_GRID``).
    """
    p_next, q, target = (np.asarray(a, dtype=float).ravel() for a in (p_next, q, target))
    etas = SHRINK_GRID if etas is None else np.asarray(etas, dtype=float)
    q_new = (1.0 - etas)[:, None] * q + etas[:, None] * p_next
    d = np.sum((q_new - target) ** 2, axis=1)
    i = int(np.argmin(d))
    return float(etas[i]), float(d[i]), float(np.sum((p_next - target) ** 2))


def shrink_threshold(p_next, q, target) -> float:
    """Every eta in (threshold, 1) gives ||Q_new - target|| < ||p_next - target||.

    From ||Q_new - t||^2 = ||a||^2 - 2(1-eta)<a, b> + (1-eta)^2 ||b||^2 with
    a = p_next - t and b = p_next - q.  Returns 1.0 when <a, b> <= 0.
    """
    p_next, q, target = (np.asarray(v, dtype=float).ravel() for v in (p_next, q, target))
    a, b = p_next - target, p_next - q
    ab, bb = float(a @ b), float(b @ b)
    if ab <= 0 or bb == 0:
        return 1.0
    return max(0.0, 1.0 - 2.0 * ab / bb)
