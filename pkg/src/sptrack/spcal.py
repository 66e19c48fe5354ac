"""Symmetric-point estimation by zero-shifting, and the calibration offset model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .devices import AnalogTile


@dataclass
class SPEstimate:
    """Result of a zero-shifting run.

    ``pulses_used`` counts element pulses (steps x tile size), the same unit
    as the tile's pulse counter.  ``trajectory`` holds (step, mean G^2) pairs
    sampled every ``max(1, steps // 1000)`` steps when requested.
    """

    estimate: np.ndarray
    pulses_used: int
    steps: int
    running_mean_G_sq: float
    tail_mean_G_sq: float
    trajectory: Optional[List[tuple]] = None
    checkpoints: Dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class OffsetModel:
    mu_r: float = 0.0
    sigma_r: float = 0.0


@dataclass
class SPErrorStats:
    mean_offset: float
    std_offset: float
    rel_mean_error: float
    mean_G_sq: float
    rel_undefined: bool = False

    def as_dict(self):
        return {"mean_offset": self.mean_offset, "std_offset": self.std_offset,
                "rel_mean_error": self.rel_mean_error, "mean_G_sq": self.mean_G_sq,
                "rel_undefined": int(self.rel_undefined)}


def _check_steps(N):
    if int(N) != N or N < 1:
        raise ValueError(f"number of zero-shifting steps must be a positive integer, got {N!r}")
    return int(N)


def _zs_loop(tile, n_steps, direction, record_trajectory, checkpoints, tail_average):
    w = tile.weights.copy()
    dw = tile.dw_min
    f0, f1, g0, g1 = tile._f0, tile._f1, tile._g0, tile._g1
    lo, hi = tile.clip_lo, tile.clip_hi
    every = max(1, n_steps // 1000)
    traj = [] if record_trajectory else None
    wanted = sorted({int(c) for c in checkpoints if 0 < c <= n_steps})
    snaps = {}
    half = n_steps // 2
    total = 0.0
    tail = 0.0
    tail_sum = np.zeros_like(w) if tail_average else None

    for n in range(n_steps):
        G = g0 + g1 * w
        gsq = float(np.mean(G * G))
        total += gsq
        if n >= half:
            tail += gsq
        if traj is not None and n % every == 0:
            traj.append((n, gsq))
        eps = direction(n) * dw
        w = w + eps * (f0 + f1 * w) - dw * G
        np.clip(w, lo, hi, out=w)
        if tail_sum is not None and n + 1 > half:
            tail_sum += w
        if wanted and wanted[0] == n + 1:
            snaps[wanted.pop(0)] = w.copy()

    tile.weights = w
    tile.pulse_counter += n_steps * tile.size
    est = tail_sum / (n_steps - half) if tail_average else w.copy()
    return SPEstimate(est, n_steps * tile.size, n_steps, total / n_steps,
                      tail / (n_steps - half), traj, snaps)


def zs_stochastic(tile: AnalogTile, N: int, rng: Optional[np.random.Generator] = None,
                  record_trajectory: bool = False, checkpoints: Sequence[int] = (),
                  tail_average: bool = False) -> SPEstimate:
    """Zero-shifting with random up/down pulses.

    Each step applies W <- W + eps*F(W) - |eps|*G(W) with eps = +-dw_min drawn
    independently per element.  The estimate is the final iterate unless
    ``tail_average`` asks for the mean of the second half.  ``checkpoints``
    collects copies of the iterate after the listed step counts.
    """
    N = _check_steps(N)
    rng = tile.rng if rng is None else rng
    shape = tile.shape

    def direction(_n):
        return np.where(rng.random(shape) < 0.5, -1.0, 1.0)

    return _zs_loop(tile, N, direction, record_trajectory, checkpoints, tail_average)


def zs_cyclic(tile: AnalogTile, N: int, record_trajectory: bool = False,
              checkpoints: Sequence[int] = ()) -> SPEstimate:
    """Deterministic zero-shifting with N down-then-up pulse pairs (2N steps)."""
    N = _check_steps(N)

    def direction(n):
        return -1.0 if n % 2 == 0 else 1.0

    return _zs_loop(tile, 2 * N, direction, record_trajectory,
                    [2 * c for c in checkpoints], False)


def make_reference(true_sp, offset: OffsetModel, rng: np.random.Generator):
    """Simulated reference r = w_sp + mu_r + sigma_r * xi, element-wise."""
    true_sp = np.asarray(true_sp, dtype=float)
    xi = rng.standard_normal(true_sp.shape)
    return true_sp + offset.mu_r + offset.sigma_r * xi


def sp_error_stats(estimate, truth, tile: Optional[AnalogTile] = None) -> SPErrorStats:
    """Element statistics of ``truth - estimate``.

    When the true mean is exactly zero the relative mean error is undefined;
    the absolute mean error is reported instead and ``rel_undefined`` is set.
    ``mean_G_sq`` needs the tile and is NaN without it.
    """
    est = estimate.estimate if isinstance(estimate, SPEstimate) else np.asarray(estimate, float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: estimate {est.shape} vs truth {truth.shape}")
    diff = truth - est
    m_true = float(np.mean(truth))
    gap = abs(m_true - float(np.mean(est)))
    undefined = m_true == 0.0
    rel = gap if undefined else gap / abs(m_true)
    g_sq = float(np.mean(tile.G(est) ** 2)) if tile is not None else float("nan")
    return SPErrorStats(float(np.mean(diff)), float(np.std(diff)), rel, g_sq, undefined)
