"""Optimism indices with closed-form bonuses and the argmax selection rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _formulas as F
from .env import GAUSSIAN, BERNOULLI, ArmState, ConfigurationError

# CLI name -> kernel code
POLICY_CODES = {
    "ucb1": F.UCB1,
    "moss": F.MOSS,
    "anytime_moss": F.ANYTIME_MOSS,
    "vanilla_moss": F.VANILLA_MOSS,
    "oc_ucb": F.OC_UCB,
    "ada_ucb": F.ADA_UCB,
    "kl_ucb": F.KL_UCB,
    "kl_moss": F.KL_MOSS,
    "kl_ucb_pp": F.KL_UCB_PP,
    "kl_ucb_switch": F.KL_UCB_SWITCH,
    "anytime_kl_ucb_switch": F.ANYTIME_KL_UCB_SWITCH,
    "round_robin": F.ROUND_ROBIN,
    "always_arm": F.ALWAYS_ARM,
}

TABLE1 = ("moss", "anytime_moss", "vanilla_moss", "oc_ucb", "ada_ucb")
KL_BUDGET_POLICIES = ("kl_moss", "kl_ucb_pp", "kl_ucb_switch", "anytime_kl_ucb_switch")
KL_POLICIES = ("kl_ucb",) + KL_BUDGET_POLICIES
# indices that read the current round t rather than only the horizon
ANYTIME = ("anytime_moss", "kl_ucb", "anytime_kl_ucb_switch")

DEFAULT_OC_UCB_EPSILON = 0.1
DEFAULT_KL_INTERVAL = (-10.0, 10.0)


@dataclass(frozen=True)
class PolicySpec:
    """A named index policy and its hyperparameters.

    ``epsilon`` is only read by ``oc_ucb``; ``kl_family``, ``kl_sigma`` and
    ``kl_interval`` only by the KL policies; ``arm`` only by ``always_arm``
    (0-based).
    """

    name: str
    epsilon: float = DEFAULT_OC_UCB_EPSILON
    kl_family: str = GAUSSIAN
    kl_sigma: float = 1.0
    kl_interval: tuple[float, float] = DEFAULT_KL_INTERVAL
    arm: int = 0

    def __post_init__(self):
        if self.name not in POLICY_CODES:
            raise ConfigurationError(f"policy: unknown policy {self.name!r}")
        if self.name == "oc_ucb" and not self.epsilon > 0:
            raise ConfigurationError(f"epsilon: OC-UCB needs epsilon > 0, got {self.epsilon}")
        if self.is_kl:
            lo, hi = self.kl_interval
            if not lo < hi:
                raise ConfigurationError(f"kl_interval: need lo < hi, got {self.kl_interval}")
            if self.kl_family not in (GAUSSIAN, BERNOULLI):
                raise ConfigurationError(f"kl_family: unknown family {self.kl_family!r}")
            if self.kl_family == GAUSSIAN and not self.kl_sigma > 0:
                raise ConfigurationError("kl_sigma: must be > 0")
        if self.arm < 0:
            raise ConfigurationError("arm: must be nonnegative")

    @classmethod
    def bernoulli_kl(cls, name: str, **kw) -> "PolicySpec":
        return cls(name, kl_family=BERNOULLI, kl_interval=(0.0, 1.0), **kw)

    @property
    def code(self) -> int:
        return POLICY_CODES[self.name]

    @property
    def is_kl(self) -> bool:
        return self.name in KL_POLICIES

    @property
    def horizon_aware(self) -> bool:
        return self.name not in ANYTIME and self.name not in ("round_robin", "always_arm")

    def kernel_args(self) -> tuple[int, list[float]]:
        params = [0.0] * F.N_PARAMS
        params[F.P_EPSILON] = float(self.epsilon)
        params[F.P_FAMILY] = float(F.BERNOULLI if self.kl_family == BERNOULLI else F.GAUSSIAN)
        params[F.P_SIGMA] = float(self.kl_sigma)
        params[F.P_LO] = float(self.kl_interval[0])
        params[F.P_HI] = float(self.kl_interval[1])
        params[F.P_ARM] = float(self.arm)
        return self.code, params


@dataclass
class IndexContext:
    """Round ``t`` (completed pulls), horizon ``T`` and every arm's state."""

    t: int
    T: int
    states: list[ArmState]

    @property
    def K(self) -> int:
        return len(self.states)

    @property
    def pulls(self) -> list[int]:
        return [s.pulls for s in self.states]

    @property
    def means(self) -> list[float]:
        return [s.mean for s in self.states]

    @classmethod
    def from_arrays(cls, t: int, T: int, pulls: Sequence[int], means: Sequence[float]) -> "IndexContext":
        return cls(t, T, [ArmState(int(n), float(m) * int(n)) for n, m in zip(pulls, means)])


def _require_pulled(state: ArmState) -> None:
    if state.pulls < 1:
        raise ConfigurationError("index evaluated on an arm with zero pulls")


def index_ucb1(state: ArmState, ctx: IndexContext) -> float:
    _require_pulled(state)
    return state.mean + F.bonus_ucb1(state.pulls, ctx.T)


def index_moss(state: ArmState, ctx: IndexContext, anytime: bool = False, vanilla: bool = False) -> float:
    """MOSS family: horizon MOSS, Anytime-MOSS (``t`` replaces ``T``) and
    Vanilla-MOSS (no ``K``, no truncation)."""
    _require_pulled(state)
    n = state.pulls
    if vanilla:
        if n > ctx.T:
            raise ConfigurationError(f"Vanilla-MOSS needs n <= T, got n={n}, T={ctx.T}")
        return state.mean + F.bonus_vanilla_moss(n, ctx.T)
    horizon = ctx.t if anytime else ctx.T
    return state.mean + F.bonus_moss(n, horizon, ctx.K)


def index_table1(policy: PolicySpec, arm: int, ctx: IndexContext) -> float:
    """OC-UCB and ADA-UCB indices (the two rows that need more than one arm's state)."""
    state = ctx.states[arm]
    for s in ctx.states:
        _require_pulled(s)
    if policy.name == "oc_ucb":
        if ctx.t > ctx.T:
            raise ConfigurationError(f"OC-UCB evaluated past the horizon (t={ctx.t} > T={ctx.T})")
        return state.mean + F.bonus_oc_ucb(state.pulls, ctx.t, ctx.T, policy.epsilon)
    if policy.name == "ada_ucb":
        h = F.ada_h(arm, ctx.pulls)
        return state.mean + F.bonus_ada_ucb(state.pulls, h, ctx.T)
    raise ConfigurationError(f"index_table1 does not handle {policy.name!r}")


def compute_index(policy: PolicySpec, arm: int, ctx: IndexContext) -> float:
    """Index of ``arm`` for any index policy, via the shared kernel formulas."""
    if policy.name in ("round_robin", "always_arm"):
        raise ConfigurationError(f"{policy.name} is a forced schedule without an index")
    for s in ctx.states:
        _require_pulled(s)
    code, params = policy.kernel_args()
    return F.index_of(code, arm, ctx.t, ctx.T, ctx.K, ctx.pulls, ctx.means, params)


def argmax_smallest(indices: Sequence[float]) -> int:
    """Argmax with ties going to the smallest arm; NaN is an error."""
    best, best_val = 0, -math.inf
    for a, u in enumerate(indices):
        if u != u:
            raise FloatingPointError(f"NaN index for arm {a}")
        if u > best_val:
            best, best_val = a, u
    return best


def select_arm(policy: PolicySpec, ctx: IndexContext) -> int:
    """Next arm (0-based) under the optimism rule."""
    if policy.name == "round_robin":
        return ctx.t % ctx.K
    if policy.name == "always_arm":
        return policy.arm
    return argmax_smallest([compute_index(policy, a, ctx) for a in range(ctx.K)])


def sandwich_probe(policy: PolicySpec, T: int, K: int, grid: int = 200) -> tuple[float, float]:
    """Range of ``sqrt(n) * (index - mean)`` at round ``t = T/(2K)`` over states
    with every ``n`` in ``[T/(4K^2), 3T/(4K^2)]``.

    Arm 0 sweeps the window while the other arms sit at its two ends and
    middle, which covers the extremes of every closed-form bonus here.
    """
    t = T // (2 * K)
    lo = math.ceil(T / (4 * K * K))
    hi = math.floor(3 * T / (4 * K * K))
    ns = np.unique(np.linspace(lo, hi, grid).round().astype(int))
    others = sorted({lo, (lo + hi) // 2, hi})
    vals = []
    for n in ns:
        for m in others:
            pulls = [int(n)] + [m] * (K - 1)
            ctx = IndexContext.from_arrays(t, T, pulls, [0.0] * K)
            vals.append(compute_index(policy, 0, ctx) * math.sqrt(n))
    return min(vals), max(vals)
