"""KL divergences, the bisection KL index and the KL-based policies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _formulas as F
from .env import BERNOULLI, GAUSSIAN, ConfigurationError
from .policies import DEFAULT_KL_INTERVAL, IndexContext, PolicySpec


@dataclass(frozen=True)
class KlBudget:
    """Right-hand side of the index constraint ``KL(mean, q) <= value``."""

    value: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ConfigurationError(f"KL budget must be finite and >= 0, got {self.value}")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class MeanInterval:
    """Compact set of admissible arm means."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"mean interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def for_family(cls, family: str) -> "MeanInterval":
        if family == BERNOULLI:
            return cls(0.0, 1.0)
        return cls(*DEFAULT_KL_INTERVAL)


def _family_code(family: str) -> int:
    if family == BERNOULLI:
        return F.BERNOULLI
    if family == GAUSSIAN:
        return F.GAUSSIAN
    raise ConfigurationError(f"unknown family {family!r}")


def kl_div(family: str, mu1: float, mu2: float, sigma: float = 1.0) -> float:
    """KL divergence between two members of ``family`` given by their means.

    Bernoulli divergences towards a boundary mean are ``math.inf``.
    """
    if family == BERNOULLI and not (0.0 <= mu1 <= 1.0 and 0.0 <= mu2 <= 1.0):
        raise ConfigurationError("Bernoulli means must lie in [0, 1]")
    return F.kl(_family_code(family), float(mu1), float(mu2), float(sigma))


def kl_index(mu_hat: float, budget: KlBudget | float, family: str,
             interval: MeanInterval | None = None, sigma: float = 1.0) -> float:
    """``sup{q in I : KL(mu_hat, q) <= budget}``.

    Bisection on ``[mu_hat, I.hi]`` to 1e-9 in ``q`` (at most 200 halvings);
    the returned point is always feasible.
    """
    interval = interval or MeanInterval.for_family(family)
    return F.kl_upper(float(mu_hat), float(budget), _family_code(family), float(sigma),
                      float(interval.lo), float(interval.hi))


def budget_for(policy: PolicySpec | str, n: int, t: int, T: int, K: int) -> KlBudget:
    """Exploration budget ``f(.)/n`` of a KL policy.

    For the switch policies this is the budget of their KL branch.
    """
    name = policy if isinstance(policy, str) else policy.name
    if n < 1:
        raise ConfigurationError("budget needs n >= 1")
    if name == "kl_ucb":
        return KlBudget(F.budget_kl_ucb(n, t))
    if name in ("kl_moss", "kl_ucb_switch"):
        return KlBudget(F.budget_kl_moss(n, T))
    if name == "kl_ucb_pp":
        return KlBudget(F.budget_kl_ucb_pp(n, T, K))
    if name == "anytime_kl_ucb_switch":
        return KlBudget(F.phi((t / K) / n) / n)
    raise ConfigurationError(f"{name!r} is not a KL policy")


def switch_threshold(x: float) -> int:
    """``floor(x ** (1/5))`` computed exactly on integers."""
    return F.fifth_root_floor(x)


def index_kl_switch(arm: int, ctx: IndexContext, anytime: bool = False,
                    policy: PolicySpec | None = None) -> float:
    """KL-UCB-Switch index: KL branch while ``n <= floor((T/K)^(1/5))``, MOSS-type
    bonus afterwards. ``anytime`` uses ``t`` and the phi-budget instead."""
    name = "anytime_kl_ucb_switch" if anytime else "kl_ucb_switch"
    if policy is None:
        policy = PolicySpec(name)
    elif policy.name != name:
        policy = PolicySpec(name, kl_family=policy.kl_family, kl_sigma=policy.kl_sigma,
                            kl_interval=policy.kl_interval)
    if ctx.states[arm].pulls < 1:
        raise ConfigurationError("index evaluated on an arm with zero pulls")
    code, params = policy.kernel_args()
    return F.index_of(code, arm, ctx.t, ctx.T, ctx.K, ctx.pulls, ctx.means, params)


def bernoulli_kl_grid(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vectorized Bernoulli KL for interior arguments."""
    return p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))


def pinsker_check(family: str, samples: int = 1000, c: float = 2.0, sigma: float = 1.0) -> bool:
    """Whether ``KL(p, q) >= c (p - q)^2`` on a ``samples x samples`` grid.

    Bernoulli uses interior points of (0, 1); Gaussian the default mean
    interval, where the check reduces to ``c <= 1 / (2 sigma^2)``.
    """
    if not c > 0:
        raise ConfigurationError("c must be positive")
    if family == BERNOULLI:
        grid = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    else:
        interval = MeanInterval.for_family(family)
        grid = np.linspace(interval.lo, interval.hi, samples)
    p = grid[:, None]
    q = grid[None, :]
    if family == BERNOULLI:
        div = bernoulli_kl_grid(p, q)
        div = np.where(p == q, 0.0, div)
    else:
        div = (p - q) ** 2 / (2.0 * sigma * sigma)
    return bool(np.all(div >= c * (p - q) ** 2))
