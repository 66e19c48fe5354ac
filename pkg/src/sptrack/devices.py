"""Resistive device response models and the pulse-update engine.

A tile stores one response function pair per element.  Both supported models
are affine in the weight,

    q_plus(w)  = alpha_plus  * (1 - w / tau_max)
    q_minus(w) = alpha_minus * (1 + w / tau_min)

with ``tau_min`` the *magnitude* of the lower weight bound.  The constant
symmetric device is the special case ``tau_max = tau_min = inf`` and
``alpha_plus = alpha_minus = q0``.  Symmetric and asymmetric components are

    F(w) = (q_minus(w) + q_plus(w)) / 2
    G(w) = (q_minus(w) - q_plus(w)) / 2
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, NoSymmetricPointError

SeedLike = Union[int, np.random.SeedSequence, None]


@dataclass(frozen=True)
class LinearDevice:
    alpha_plus: float = 1.0
    alpha_minus: float = 1.0
    tau_max: float = 1.0
    tau_min: float = 1.0

    def __post_init__(self):
        for name in ("alpha_plus", "alpha_minus", "tau_max", "tau_min"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"LinearDevice.{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class ConstantSymmetric:
    """q_plus = q_minus = q0 everywhere; weights clipped to [-bound, bound]."""

    q0: float = 1.0
    bound: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.q0) and self.q0 > 0):
            raise ConfigError(f"ConstantSymmetric.q0 must be positive, got {self.q0!r}")
        if not (np.isfinite(self.bound) and self.bound > 0):
            raise ConfigError(f"ConstantSymmetric.bound must be positive, got {self.bound!r}")


ResponseModel = Union[LinearDevice, ConstantSymmetric]


@dataclass(frozen=True)
class DeviceVariationSpec:
    """Device-to-device spread of the slope magnitude and of the up/down asymmetry."""

    sigma_d2d: float = 0.0
    sigma_pm: float = 0.0

    def __post_init__(self):
        if self.sigma_d2d < 0 or self.sigma_pm < 0:
            raise ConfigError("variation sigmas must be nonnegative")


@dataclass
class UpdateOutcome:
    ideal_increment: np.ndarray
    realized_increment: np.ndarray
    pulses_emitted: int


class AnalogTile:
    """A rows x cols array of analog weights with per-element device parameters.

    The parameter arrays are read-only after construction; the weights are the
    only mutable state besides the pulse and clip counters.
    """

    def __init__(self, weights, alpha_plus, alpha_minus, tau_max, tau_min,
                 dw_min: float, model: ResponseModel, clip_lo=None, clip_hi=None,
                 rng: Optional[np.random.Generator] = None):
        weights = np.array(weights, dtype=float, ndmin=2)
        if weights.ndim != 2:
            raise ConfigError("tile weights must be a 2-D array")
        if not (np.isfinite(dw_min) and dw_min > 0):
            raise ConfigError(f"dw_min must be positive, got {dw_min!r}")
        shape = weights.shape

        def _param(a):
            a = np.broadcast_to(np.asarray(a, dtype=float), shape).copy()
            a.setflags(write=False)
            return a

        self.alpha_plus = _param(alpha_plus)
        self.alpha_minus = _param(alpha_minus)
        self.tau_max = _param(tau_max)
        self.tau_min = _param(tau_min)
        if np.any(self.alpha_plus <= 0) or np.any(self.alpha_minus <= 0):
            raise ConfigError("response slopes must be positive")
        if np.any(self.tau_max <= 0) or np.any(self.tau_min <= 0):
            raise ConfigError("bound magnitudes must be positive")
        self.clip_lo = _param(-self.tau_min if clip_lo is None else clip_lo)
        self.clip_hi = _param(self.tau_max if clip_hi is None else clip_hi)
        if np.any(self.clip_lo >= self.clip_hi):
            raise ConfigError("clip_lo must be strictly below clip_hi")

        self.dw_min = float(dw_min)
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng()
        self.pulse_counter = 0
        self.clip_events = 0
        self.weights = np.clip(weights, self.clip_lo, self.clip_hi)

        # affine coefficients: q_plus = ap - sp*w, q_minus = am + sm*w
        sp = self.alpha_plus / self.tau_max
        sm = self.alpha_minus / self.tau_min
        self._f0 = (self.alpha_minus + self.alpha_plus) / 2
        self._f1 = (sm - sp) / 2
        self._g0 = (self.alpha_minus - self.alpha_plus) / 2
        self._g1 = (sm + sp) / 2

    @property
    def shape(self):
        return self.weights.shape

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def is_symmetric(self) -> bool:
        return isinstance(self.model, ConstantSymmetric)

    def q_plus(self, w=None):
        w = self.weights if w is None else w
        return self.alpha_plus * (1 - w / self.tau_max)

    def q_minus(self, w=None):
        w = self.weights if w is None else w
        return self.alpha_minus * (1 + w / self.tau_min)

    def F(self, w=None):
        w = self.weights if w is None else w
        return self._f0 + self._f1 * w

    def G(self, w=None):
        w = self.weights if w is None else w
        return self._g0 + self._g1 * w

    def G_slope(self):
        """Per-element dG/dw; the monotonicity modulus of an affine device."""
        return self._g1.copy()

    def copy(self, seed: SeedLike = None) -> "AnalogTile":
        """Deep copy; the pulse stream is cloned unless a new seed is given."""
        rng = copy.deepcopy(self.rng) if seed is None else np.random.default_rng(seed)
        t = AnalogTile(self.weights.copy(), self.alpha_plus, self.alpha_minus,
                       self.tau_max, self.tau_min, self.dw_min, self.model,
                       self.clip_lo, self.clip_hi, rng=rng)
        t.pulse_counter = self.pulse_counter
        t.clip_events = self.clip_events
        return t

    def __repr__(self):
        return (f"AnalogTile(shape={self.shape}, model={self.model!r}, "
                f"dw_min={self.dw_min}, pulses={self.pulse_counter})")


def _as_seedseq(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _check_dims(rows, cols, dw_min):
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise ConfigError(f"tile dimensions must be positive integers, got {rows}x{cols}")
    if not (np.isfinite(dw_min) and dw_min > 0):
        raise ConfigError(f"dw_min must be positive, got {dw_min!r}")


def sample_slopes(shape, model: LinearDevice, variation: DeviceVariationSpec,
                  rng: np.random.Generator):
    """Draw per-element (alpha_plus, alpha_minus).

    alpha_plus = a+ * gamma + rho and alpha_minus = a- * gamma - rho with
    gamma = exp(sigma_d2d * xi1) and rho = sigma_pm * xi2.  Draws with a
    nonpositive slope are redrawn.
    """
    ap = np.empty(shape)
    am = np.empty(shape)
    todo = np.ones(shape, dtype=bool)
    for _ in range(1000):
        n = int(todo.sum())
        if n == 0:
            break
        gamma = np.exp(variation.sigma_d2d * rng.standard_normal(n))
        rho = variation.sigma_pm * rng.standard_normal(n)
        ap[todo] = model.alpha_plus * gamma + rho
        am[todo] = model.alpha_minus * gamma - rho
        todo = (ap <= 0) | (am <= 0)
    else:
        raise ConfigError("could not sample positive slopes; variation too large")
    return ap, am


def make_tile(rows: int, cols: int, model: ResponseModel,
              variation: Optional[DeviceVariationSpec] = None, dw_min: float = 1e-3,
              seed: SeedLike = None, init_scale: float = 0.5) -> AnalogTile:
    """Build a tile with sampled per-element parameters and random initial weights.

    Weights start uniform on ``[init_scale*clip_lo, init_scale*clip_hi]``.
    The seed fans out into independent streams for parameters, initial
    weights and the tile's own pulse stream.
    """
    _check_dims(rows, cols, dw_min)
    variation = variation or DeviceVariationSpec()
    ss_param, ss_init, ss_pulse = _as_seedseq(seed).spawn(3)
    prng = np.random.default_rng(ss_param)
    shape = (int(rows), int(cols))

    if isinstance(model, LinearDevice):
        ap, am = sample_slopes(shape, model, variation, prng)
        tmax, tmin = model.tau_max, model.tau_min
        lo, hi = -model.tau_min, model.tau_max
    elif isinstance(model, ConstantSymmetric):
        # asymmetry spread would leave no symmetric point; only the magnitude varies
        q = model.q0 * np.exp(variation.sigma_d2d * prng.standard_normal(shape))
        ap = am = q
        tmax = tmin = np.inf
        lo, hi = -model.bound, model.bound
    else:
        raise ConfigError(f"unknown response model {model!r}")

    irng = np.random.default_rng(ss_init)
    w0 = irng.uniform(init_scale * lo, init_scale * hi, size=shape)
    return AnalogTile(w0, ap, am, tmax, tmin, dw_min, model, lo, hi,
                      rng=np.random.default_rng(ss_pulse))


def make_tile_with_sp(rows: int, cols: int, sp_mean: float, sp_std: float,
                      tau: float = 1.0, sigma_d2d: float = 0.0, dw_min: float = 1e-3,
                      seed: SeedLike = None, init_scale: float = 0.5,
                      max_abs_sp: float = 0.9) -> AnalogTile:
    """Linear-device tile whose per-element symmetric points follow N(sp_mean, sp_std).

    Each element gets alpha_pm = gamma * (1 +- s / tau) so its symmetric point
    is exactly ``s``.  Draws with ``|s| > max_abs_sp * tau`` are redrawn.
    """
    _check_dims(rows, cols, dw_min)
    if sp_std < 0 or not 0 < max_abs_sp < 1:
        raise ConfigError("need sp_std >= 0 and 0 < max_abs_sp < 1")
    if abs(sp_mean) >= max_abs_sp * tau and sp_std == 0:
        raise ConfigError("sp_mean outside the admissible range")
    ss_param, ss_init, ss_pulse = _as_seedseq(seed).spawn(3)
    prng = np.random.default_rng(ss_param)
    shape = (int(rows), int(cols))
    s = np.empty(shape)
    todo = np.ones(shape, dtype=bool)
    for _ in range(1000):
        n = int(todo.sum())
        if n == 0:
            break
        s[todo] = sp_mean + sp_std * prng.standard_normal(n)
        todo = np.abs(s) > max_abs_sp * tau
    else:
        raise ConfigError("could not sample symmetric points inside the bounds")
    gamma = np.exp(sigma_d2d * prng.standard_normal(shape))
    ap = gamma * (1 + s / tau)
    am = gamma * (1 - s / tau)
    model = LinearDevice(1.0, 1.0, tau, tau)
    irng = np.random.default_rng(ss_init)
    w0 = irng.uniform(-init_scale * tau, init_scale * tau, size=shape)
    return AnalogTile(w0, ap, am, tau, tau, dw_min, model,
                      rng=np.random.default_rng(ss_pulse))


def response_FG(tile: AnalogTile, w=None):
    """Symmetric and asymmetric components at the current (or given) weights."""
    return tile.F(w), tile.G(w)


def q_bounds(tile: AnalogTile):
    """(q_min, q_max) over the tile, with both responses evaluated at the clip bounds."""
    vals = np.stack([tile.q_plus(tile.clip_lo), tile.q_plus(tile.clip_hi),
                     tile.q_minus(tile.clip_lo), tile.q_minus(tile.clip_hi)])
    return float(vals.min()), float(vals.max())


def _validate_delta(tile, delta):
    delta = np.asarray(delta, dtype=float)
    if delta.shape != tile.shape:
        try:
            delta = np.broadcast_to(delta.reshape(tile.shape), tile.shape)
        except ValueError:
            raise ValueError(f"delta shape {delta.shape} does not match tile {tile.shape}") from None
    if not np.all(np.isfinite(delta)):
        raise ValueError("delta contains non-finite entries")
    return delta


def apply_update(tile: AnalogTile, delta, mode: str = "ideal",
                 rng: Optional[np.random.Generator] = None) -> UpdateOutcome:
    """Apply a desired increment to the tile.

    ``ideal``: W <- W + delta*F(W) - |delta|*G(W).
    ``pulsed``: |delta|/dw_min is stochastically rounded to a pulse count n and
    the element moves by +n*dw_min*q_plus(W) or -n*dw_min*q_minus(W), with the
    responses frozen at the pre-update weight.  Either way the result is
    clipped to the tile bounds.
    """
    delta = _validate_delta(tile, delta)
    w = tile.weights
    F = tile._f0 + tile._f1 * w
    G = tile._g0 + tile._g1 * w
    ideal = delta * F - np.abs(delta) * G

    if mode == "ideal":
        inc = ideal
        pulses = 0
    elif mode == "pulsed":
        rng = tile.rng if rng is None else rng
        x = np.abs(delta) / tile.dw_min
        base = np.floor(x)
        n = base + (rng.random(tile.shape) < (x - base))
        step = n * tile.dw_min
        inc = np.where(delta > 0, step * (F - G), -step * (F + G))
        pulses = int(n.sum())
    else:
        raise ValueError(f"unknown update mode {mode!r}")

    new = w + inc
    clipped = (new < tile.clip_lo) | (new > tile.clip_hi)
    if clipped.any():
        new = np.clip(new, tile.clip_lo, tile.clip_hi)
        inc = np.where(clipped, new - w, inc)
        tile.clip_events += int(clipped.sum())
    tile.weights = new
    tile.pulse_counter += pulses
    return UpdateOutcome(ideal, inc, pulses)


def symmetric_point(tile: AnalogTile, method: str = "auto", tol: float = 1e-12):
    """Per-element weight where G vanishes.

    Closed form for the affine models; ``method="bisect"`` runs a bracketing
    search on G over the clip range instead.  The constant symmetric device
    has G == 0 everywhere and returns zeros.
    """
    if tile.is_symmetric:
        return np.zeros(tile.shape)
    if method not in ("auto", "closed", "bisect"):
        raise ValueError(f"unknown method {method!r}")

    g_lo, g_hi = tile.G(tile.clip_lo), tile.G(tile.clip_hi)
    if np.any(np.sign(g_lo) * np.sign(g_hi) > 0):
        raise NoSymmetricPointError("G has the same sign at both clip bounds")

    if method in ("auto", "closed"):
        ap, am = tile.alpha_plus, tile.alpha_minus
        return (ap - am) / (ap / tile.tau_max + am / tile.tau_min)

    lo = tile.clip_lo.copy()
    hi = tile.clip_hi.copy()
    rising = g_hi >= g_lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = tile.G(mid)
        go_up = np.where(rising, gm < 0, gm > 0)
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    mid = 0.5 * (lo + hi)
    if np.max(np.abs(tile.G(mid))) > tol:
        raise NoSymmetricPointError("bisection did not reach the requested tolerance")
    return mid


DEVICE_KINDS = ("linear", "constant", "sp")


@dataclass(frozen=True)
class DeviceSpec:
    """Flat, serializable recipe for building tiles.

    ``kind`` selects the construction: ``linear`` samples slopes around
    (alpha_plus, alpha_minus) with the given variation, ``constant`` builds a
    constant symmetric device, and ``sp`` builds a linear device whose
    symmetric points follow N(sp_mean, sp_std).
    """

    kind: str = "linear"
    alpha_plus: float = 1.0
    alpha_minus: float = 1.0
    tau_max: float = 1.0
    tau_min: float = 1.0
    q0: float = 1.0
    bound: float = 1.0
    sigma_d2d: float = 0.0
    sigma_pm: float = 0.0
    sp_mean: float = 0.0
    sp_std: float = 0.0
    dw_min: float = 1e-3
    init_scale: float = 0.5

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ConfigError(f"device kind must be one of {DEVICE_KINDS}, got {self.kind!r}")
        if not (self.dw_min > 0):
            raise ConfigError("dw_min must be positive")

    def model(self) -> ResponseModel:
        if self.kind == "constant":
            return ConstantSymmetric(self.q0, self.bound)
        if self.kind == "sp":
            return LinearDevice(1.0, 1.0, self.tau_max, self.tau_max)
        return LinearDevice(self.alpha_plus, self.alpha_minus, self.tau_max, self.tau_min)

    def build(self, rows: int, cols: int, seed: SeedLike = None,
              dw_min: Optional[float] = None) -> AnalogTile:
        dw = self.dw_min if dw_min is None else dw_min
        if self.kind == "sp":
            return make_tile_with_sp(rows, cols, self.sp_mean, self.sp_std, tau=self.tau_max,
                                     sigma_d2d=self.sigma_d2d, dw_min=dw, seed=seed,
                                     init_scale=self.init_scale)
        return make_tile(rows, cols, self.model(),
                         DeviceVariationSpec(self.sigma_d2d, self.sigma_pm), dw, seed,
                         init_scale=self.init_scale)
