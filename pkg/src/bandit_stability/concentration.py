"""Maximal inequalities for drifted sample means and their Monte Carlo checks.

The process under study is ``Q_n = Xbar_n + g(n)`` for i.i.d. centered
rewards and a nonincreasing drift ``g``, watched over a window ``[lo, hi]``
with ``lo = ceil(alpha N)`` and ``hi = floor(beta N)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .env import ConfigurationError, RngStream

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
MC_CHUNK = 2000  # replications per chunk; fixed so estimates do not depend on workers


@dataclass(frozen=True)
class DriftProcessSpec:
    """Drift ``g(n) = gamma / sqrt(n)`` unless ``g_table`` is given, in which
    case ``g_table[n - 1]`` is ``g(n)``."""

    N: int
    alpha: float
    beta: float = 1.0
    sigma: float = 1.0
    gamma: float = 1.0
    g_table: tuple[float, ...] | None = None
    c_tilde: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ConfigurationError(f"N: must be >= 1, got {self.N}")
        if not 0.0 < self.alpha < self.beta <= 1.0:
            raise ConfigurationError(
                f"alpha/beta: need 0 < alpha < beta <= 1, got ({self.alpha}, {self.beta})")
        if not self.sigma > 0:
            raise ConfigurationError("sigma: must be > 0")
        if self.lo > self.hi:
            raise ConfigurationError(f"window: [{self.lo}, {self.hi}] is empty for N={self.N}")
        if self.g_table is not None:
            if len(self.g_table) < self.hi:
                raise ConfigurationError(f"g_table: needs at least {self.hi} entries")
            w = np.asarray(self.g_table[self.lo - 1:self.hi])
            if np.any(np.diff(w) > 0):
                raise ConfigurationError("g_table: g must be nonincreasing on the window")
        elif self.gamma < 0:
            raise ConfigurationError("gamma: g = gamma/sqrt(n) must be nonincreasing, so gamma >= 0")

    @property
    def lo(self) -> int:
        return max(1, math.ceil(self.alpha * self.N))

    @property
    def hi(self) -> int:
        return math.floor(self.beta * self.N)

    def g(self, n: int) -> float:
        if self.g_table is not None:
            return float(self.g_table[n - 1])
        return self.gamma / math.sqrt(n)

    def g_array(self, n: np.ndarray) -> np.ndarray:
        if self.g_table is not None:
            return np.asarray(self.g_table, dtype=np.float64)[n - 1]
        return self.gamma / np.sqrt(n)


def folded_normal_mean(mu: float, sigma: float) -> float:
    """``E|V|`` for ``V ~ N(mu, sigma^2)``."""
    if not sigma > 0:
        raise ConfigurationError("sigma must be > 0")
    mu = abs(mu)
    return float(sigma * SQRT_2_OVER_PI * math.exp(-mu * mu / (2 * sigma * sigma))
                 + mu * (1 - 2 * ndtr(-mu / sigma)))


def _check_lambda(lam: float) -> None:
    if not lam > 0:
        raise ConfigurationError(f"lambda must be > 0, got {lam}")


def maximal_bound_gaussian(spec: DriftProcessSpec, lam: float) -> float:
    """Upper bound on ``P(max_{lo<=n<=hi} Xbar_n + g(n) >= lam)`` for Gaussian rewards.

    Uses exact folded-normal moments for the terminal value and for each
    compensator step ``-Xbar_k/(k+1) + g(k+1) - g(k)`` (split by the triangle
    inequality).
    """
    _check_lambda(lam)
    lo, hi, s = spec.lo, spec.hi, spec.sigma
    terms = [folded_normal_mean(spec.g(hi), s / math.sqrt(hi))]
    for k in range(lo, hi):
        terms.append(s * SQRT_2_OVER_PI / math.sqrt(k) / (k + 1))
        terms.append(abs(spec.g(k + 1) - spec.g(k)))
    return math.fsum(terms) / lam


def maximal_bound_subgaussian(spec: DriftProcessSpec, lam: float) -> float:
    """Sub-Gaussian form of the bound, with universal constant ``spec.c_tilde``."""
    _check_lambda(lam)
    c = spec.c_tilde
    if not c > 0:
        raise ConfigurationError(f"c_tilde: must be > 0, got {c}")
    N, lo, hi = spec.N, spec.lo, spec.hi
    g_lo, g_hi = spec.g(lo), spec.g(hi)
    terms = [
        (c * SQRT_2_OVER_PI * math.exp(-N * g_hi * g_hi / 2) + 2 * c) / math.sqrt(N),
        g_lo - g_hi,
        g_hi * (1 - 2 * float(ndtr(-math.sqrt(N) * g_hi / spec.sigma))),
    ]
    terms += [SQRT_2_OVER_PI / ((k + 1) * math.sqrt(k)) for k in range(lo, hi)]
    return math.fsum(terms) / lam


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    mc_se: float
    replications: int


def _window_maxima(spec: DriftProcessSpec, R: int, rng: RngStream, workers: int | None) -> np.ndarray:
    lo, hi = spec.lo, spec.hi
    n = np.arange(1, hi + 1, dtype=np.float64)
    drift = spec.g_array(np.arange(lo, hi + 1))
    out = np.empty(R)
    blocks = [(i, s, min(R, s + MC_CHUNK)) for i, s in enumerate(range(0, R, MC_CHUNK))]

    def work(block):
        i, s, e = block
        x = spec.sigma * rng.child(i).generator.standard_normal((e - s, hi))
        xbar = np.cumsum(x, axis=1) / n
        out[s:e] = (xbar[:, lo - 1:] + drift).max(axis=1)

    workers = workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(work, blocks))
    return out


def mc_max_probability(spec: DriftProcessSpec, lam, R: int, rng: RngStream,
                       workers: int | None = None):
    """Monte Carlo ``P(max_{lo<=n<=hi} Xbar_n + g(n) >= lam)`` with Gaussian rewards.

    ``lam`` may be a scalar (returns one :class:`McEstimate`) or a sequence
    (returns a list, all computed from the same maxima).
    """
    if R < 1000:
        raise ConfigurationError(f"replications: need R >= 1000, got {R}")
    maxima = _window_maxima(spec, R, rng, workers)
    lams = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    res = []
    for l in lams:
        p = float(np.count_nonzero(maxima >= l)) / R
        res.append(McEstimate(p, math.sqrt(p * (1 - p) / R), R))
    return res[0] if np.ndim(lam) == 0 else res


def doob_decomposition_check(n: int, g: Callable[[int], float], samples: Sequence[float],
                             tol: float = 1e-12) -> bool:
    """Check ``Xbar_{n+1} + g(n+1) = Xbar_n + g(n) + (X_{n+1} - Xbar_n)/(n+1) + g(n+1) - g(n)``."""
    if len(samples) != n + 1 or n < 1:
        raise ConfigurationError("samples must hold n + 1 values with n >= 1")
    xbar_n = math.fsum(samples[:n]) / n
    xbar_n1 = math.fsum(samples) / (n + 1)
    lhs = xbar_n1 + g(n + 1)
    rhs = (xbar_n + g(n)) + (samples[n] - xbar_n) / (n + 1) + (g(n + 1) - g(n))
    return abs(lhs - rhs) <= tol * max(1.0, abs(lhs))


def smallest_c(N: int, gamma: float = 1.0, sigma: float = 1.0, target: float = 0.5,
               grid: Sequence[float] | None = None) -> float | None:
    """Smallest ``c`` on ``grid`` with Gaussian bound ``< target`` at ``lam = c/sqrt(N)``
    over the window ``[N/16, N]`` and drift ``gamma/sqrt(n)``."""
    spec = DriftProcessSpec(N=N, alpha=1 / 16, beta=1.0, sigma=sigma, gamma=gamma)
    if grid is None:
        grid = np.round(np.arange(0.05, 100.0, 0.05), 2)
    grid = sorted(float(c) for c in grid if c > 0)

    def ok(c):
        return maximal_bound_gaussian(spec, c / math.sqrt(N)) < target

    # the bound decreases in c, so bisect on the sorted grid
    if not grid or not ok(grid[-1]):
        return None
    lo, hi = 0, len(grid) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(grid[mid]):
            hi = mid
        else:
            lo = mid + 1
    return grid[lo]


def bound_table(spec: DriftProcessSpec, lambdas: Sequence[float], R: int, rng: RngStream,
                workers: int | None = None) -> list[dict]:
    """Rows of (lambda, MC estimate, MC-SE, Gaussian bound, sub-Gaussian bound)."""
    est = mc_max_probability(spec, list(lambdas), R, rng, workers)
    return [
        {
            "lambda": float(l),
            "mc_estimate": e.estimate,
            "mc_se": e.mc_se,
            "gaussian_bound": maximal_bound_gaussian(spec, l),
            "subgaussian_bound": maximal_bound_subgaussian(spec, l),
        }
        for l, e in zip(lambdas, est)
    ]
