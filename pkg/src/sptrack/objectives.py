"""Stochastic objectives with a known minimizer."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError


class QuadraticObjective:
    """f(W) = 1/2 (W - W*)^T diag(a) (W - W*) with Gaussian gradient noise.

    The stochastic gradient adds ``noise_sigma * xi`` per coordinate, so its
    total variance is ``noise_sigma**2 * D``.
    """

    def __init__(self, eigs, w_star, noise_sigma: float = 0.1):
        self.eigs = np.asarray(eigs, dtype=float).ravel()
        self.w_star = np.asarray(w_star, dtype=float).ravel()
        if self.eigs.shape != self.w_star.shape:
            raise ConfigError("eigenvalues and optimum must have the same length")
        if np.any(self.eigs <= 0):
            raise ConfigError("eigenvalues must be positive")
        if noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        self.noise_sigma = float(noise_sigma)
        self.D = self.w_star.size
        self.mu = float(self.eigs.min())
        self.L = float(self.eigs.max())

    @classmethod
    def default(cls, D: int = 20, mu: float = 0.5, L: float = 2.0, noise_sigma: float = 0.1,
                w_star_range=(0.4, 0.8), seed=0):
        """Eigenvalues log-spaced on [mu, L]; optimum uniform on ``w_star_range``."""
        rng = np.random.default_rng(seed)
        eigs = np.geomspace(mu, L, D) if D > 1 else np.array([mu])
        w_star = rng.uniform(*w_star_range, size=D)
        return cls(eigs, w_star, noise_sigma)

    def loss(self, W) -> float:
        d = np.asarray(W).ravel() - self.w_star
        return 0.5 * float(np.dot(self.eigs * d, d))

    def grad_exact(self, W) -> np.ndarray:
        return self.eigs * (np.asarray(W).ravel() - self.w_star)

    def grad(self, W, rng: np.random.Generator) -> np.ndarray:
        return self.grad_exact(W) + self.noise_sigma * rng.standard_normal(self.D)


class LogisticObjective:
    """L2-regularized logistic regression on a synthetic Gaussian design.

    Sampling noise comes from drawing a minibatch of rows uniformly with
    replacement.  The minimizer is found by Newton's method at construction.
    """

    def __init__(self, X, y, reg: float = 0.1, batch_size: int = 8):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ConfigError("X must be n x D with one label per row")
        if reg <= 0:
            raise ConfigError("reg must be positive to keep the problem strongly convex")
        self.reg = float(reg)
        self.batch_size = int(batch_size)
        self.n, self.D = self.X.shape
        self.mu = self.reg
        self.L = self.reg + 0.25 * float(np.linalg.eigvalsh(self.X.T @ self.X / self.n).max())
        self.w_star = self._newton()
        # per-coordinate scale, so total variance at the optimum is noise_sigma**2 * D
        self.noise_sigma = float(np.sqrt(self._grad_variance(self.w_star) / self.D))

    @classmethod
    def synthetic(cls, n: int = 200, D: int = 5, reg: float = 0.1, batch_size: int = 8,
                  scale: float = 0.5, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, D))
        w_true = rng.uniform(-scale, scale, size=D)
        p = 1.0 / (1.0 + np.exp(-X @ w_true))
        y = (rng.random(n) < p).astype(float)
        return cls(X, y, reg, batch_size)

    def _sample_grads(self, W, idx):
        X = self.X[idx]
        z = X @ W
        s = 1.0 / (1.0 + np.exp(-z))
        return (s - self.y[idx])[:, None] * X + self.reg * W

    def loss(self, W) -> float:
        W = np.asarray(W).ravel()
        z = self.X @ W
        nll = np.logaddexp(0.0, z) - self.y * z
        return float(nll.mean() + 0.5 * self.reg * W @ W)

    def grad_exact(self, W) -> np.ndarray:
        W = np.asarray(W).ravel()
        return self._sample_grads(W, slice(None)).mean(axis=0)

    def grad(self, W, rng: np.random.Generator) -> np.ndarray:
        W = np.asarray(W).ravel()
        idx = rng.integers(0, self.n, size=self.batch_size)
        return self._sample_grads(W, idx).mean(axis=0)

    def _grad_variance(self, W) -> float:
        # total variance of a size-batch_size minibatch gradient
        g = self._sample_grads(W, slice(None))
        return float(((g - g.mean(axis=0)) ** 2).sum(axis=1).mean()) / self.batch_size

    def _newton(self, iters: int = 50) -> np.ndarray:
        W = np.zeros(self.D)
        for _ in range(iters):
            s = 1.0 / (1.0 + np.exp(-self.X @ W))
            g = self.X.T @ (s - self.y) / self.n + self.reg * W
            H = (self.X.T * (s * (1 - s))) @ self.X / self.n + self.reg * np.eye(self.D)
            step = np.linalg.solve(H, g)
            W = W - step
            if np.linalg.norm(step) < 1e-15:
                break
        return W
