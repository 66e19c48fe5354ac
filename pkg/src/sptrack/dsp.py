"""Chopper sequences and the moving-average filter seen as a first-order IIR."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import PrecisionError


def _check_eta(eta):
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"eta must lie in (0, 1], got {eta!r}")


@dataclass
class ChopperState:
    """Random sign that flips with probability ``p`` at every draw."""

    p: float = 0.0
    c: float = 1.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    flips: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"flip probability must lie in [0, 1], got {self.p!r}")
        if self.c not in (1.0, -1.0):
            raise ValueError("chopper sign must be +1 or -1")

    def step(self) -> float:
        # one uniform per draw regardless of p keeps streams aligned across settings
        if self.rng.random() < self.p:
            self.c = -self.c
            self.flips += 1
        return self.c


def chopper_sequence(state: ChopperState, K: int) -> List[float]:
    if K < 0:
        raise ValueError("K must be nonnegative")
    return [state.step() for _ in range(int(K))]


def ma_frequency_response(eta: float, omega) -> np.ndarray:
    """|H(e^{jw})| of q_{k+1} = (1-eta) q_k + eta p_{k+1}."""
    _check_eta(eta)
    omega = np.asarray(omega, dtype=float)
    # 1 + a^2 - 2a cos(w) rewritten to avoid cancellation when eta is small
    a = 1.0 - eta
    return eta / np.sqrt(eta * eta + 4.0 * a * np.sin(omega / 2.0) ** 2)


def default_taps(eta: float, tol: float = 1e-12) -> int:
    """Impulse-response length after which the geometric tail drops below ``tol``."""
    _check_eta(eta)
    if eta == 1.0:
        return 1
    return int(math.ceil(math.log(tol) / math.log(1.0 - eta)))


def impulse_response(eta: float, n_taps: int) -> np.ndarray:
    _check_eta(eta)
    return eta * (1.0 - eta) ** np.arange(n_taps)


def empirical_frequency_response(eta: float, n_freq: int = 128,
                                 n_taps: Optional[int] = None):
    """DTFT magnitude of the truncated impulse response on a uniform grid over [0, pi].

    Returns a list of ``(omega, magnitude)`` pairs.
    """
    _check_eta(eta)
    if n_taps is None:
        n_taps = default_taps(eta)
    if eta < 1.0 and (1.0 - eta) ** n_taps >= 1e-12:
        raise PrecisionError(f"{n_taps} taps leave a tail of {(1 - eta) ** n_taps:.3g}")
    h = impulse_response(eta, n_taps)
    omega = np.linspace(0.0, np.pi, n_freq)
    k = np.arange(n_taps)
    # direct sum, independent of the closed-form geometric series
    H = np.exp(-1j * np.outer(omega, k)) @ h
    return list(zip(omega.tolist(), np.abs(H).tolist()))


def moving_average(x, eta: float, q0: Optional[float] = None) -> np.ndarray:
    """Run the filter over a sequence; ``q0`` defaults to the first input."""
    _check_eta(eta)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    q = x[0] if q0 is None else q0
    for i, v in enumerate(x):
        q = (1.0 - eta) * q + eta * v
        out[i] = q
    return out


def chop_filter_demo(eta: float, p: float, amplitude: float = 1.0, drift: float = 1.0,
                     K: int = 2000, seed: int = 0):
    """Mean distance to ``drift`` of a chopped input and of its filtered version.

    The input is ``s_k * amplitude + drift`` with ``s_k`` a chopper sequence;
    returns ``(input_distance, output_distance)``.
    """
    state = ChopperState(p=p, rng=np.random.default_rng(seed))
    s = np.asarray(chopper_sequence(state, K))
    x = s * amplitude + drift
    q = moving_average(x, eta)
    return float(np.mean(np.abs(x - drift))), float(np.mean(np.abs(q - drift)))
