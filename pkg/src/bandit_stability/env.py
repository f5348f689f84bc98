"""Reward distributions, deterministic random streams and the episode driver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"
FAMILIES = (GAUSSIAN, BERNOULLI)

RNG_ALGORITHM = "numpy.random.Philox(SeedSequence(entropy=base_seed, spawn_key=(replication, role, *path)))"

# stream roles used across the package
ROLE_EPISODE = 0
ROLE_ASSIGNMENT = 1
ROLE_LIMIT = 2
ROLE_CONCENTRATION = 3


class ConfigurationError(ValueError):
    """Invalid experiment or episode configuration."""


@dataclass(frozen=True)
class RewardModel:
    """An i.i.d. reward law for one arm.

    ``mean`` is the arm mean; for Bernoulli arms it is the success
    probability and ``sigma`` is ignored.
    """

    family: str
    mean: float
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown reward family {self.family!r}")
        if self.family == GAUSSIAN and not self.sigma > 0:
            raise ConfigurationError(f"Gaussian sigma must be > 0, got {self.sigma}")
        if self.family == BERNOULLI and not 0.0 <= self.mean <= 1.0:
            raise ConfigurationError(f"Bernoulli p must lie in [0, 1], got {self.mean}")

    @classmethod
    def gaussian(cls, mean: float = 0.0, sigma: float = 1.0) -> "RewardModel":
        return cls(GAUSSIAN, float(mean), float(sigma))

    @classmethod
    def bernoulli(cls, p: float) -> "RewardModel":
        return cls(BERNOULLI, float(p), 1.0)

    @property
    def sd(self) -> float:
        """Standard deviation of one reward."""
        if self.family == GAUSSIAN:
            return self.sigma
        return math.sqrt(self.mean * (1.0 - self.mean))

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.family == GAUSSIAN:
            return self.mean + self.sigma * gen.standard_normal(size)
        return (gen.random(size) < self.mean).astype(np.float64)


@dataclass
class RngStream:
    """A named, reproducible random stream.

    Streams are keyed by ``(base_seed, replication, role, *path)``; the key is
    fed to :class:`numpy.random.SeedSequence` as entropy plus spawn key and
    drives a counter-based Philox generator, so the draws never depend on
    which worker or in which order streams are consumed.
    """

    base_seed: int
    replication: int
    role: int
    path: tuple[int, ...] = ()
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def key(self) -> tuple[int, ...]:
        return (self.replication, self.role, *self.path)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence(entropy=self.base_seed, spawn_key=self.key)
            self._gen = np.random.Generator(np.random.Philox(seq))
        return self._gen

    def child(self, index: int) -> "RngStream":
        return RngStream(self.base_seed, self.replication, self.role, (*self.path, int(index)))


def derive_stream(base_seed: int, replication: int, role: int) -> RngStream:
    """Stream for one (replication, role) pair of an experiment seeded by ``base_seed``."""
    base_seed, replication, role = int(base_seed), int(replication), int(role)
    if not 0 <= base_seed < 2**64:
        raise ConfigurationError(f"base seed must be an unsigned 64-bit integer, got {base_seed}")
    if replication < 0 or role < 0:
        raise ConfigurationError("replication and role must be nonnegative")
    return RngStream(base_seed, replication, role)


def sample(model: RewardModel, rng: RngStream) -> float:
    """One reward draw; advances ``rng``."""
    return float(model.draw(rng.generator, 1)[0])


@dataclass
class ArmState:
    """Running statistics of one arm."""

    pulls: int = 0
    sum_rewards: float = 0.0

    @property
    def initialized(self) -> bool:
        return self.pulls > 0

    @property
    def mean(self) -> float:
        return self.sum_rewards / self.pulls if self.pulls > 0 else 0.0

    def update(self, reward: float) -> None:
        self.pulls += 1
        self.sum_rewards += reward


@dataclass
class EpisodeResult:
    """Terminal statistics of one simulated horizon."""

    pulls: np.ndarray
    means: np.ndarray
    sum_squares: np.ndarray
    regret: float
    checkpoints: list[tuple[int, np.ndarray]] = field(default_factory=list)
    base_seed: int | None = None
    replication: int | None = None

    @property
    def T(self) -> int:
        return int(self.pulls.sum())

    def pulls_at(self, t: int) -> np.ndarray | None:
        for tc, p in self.checkpoints:
            if tc == t:
                return p
        return None


def regret(result: EpisodeResult | Sequence[int], means: Sequence[float]) -> float:
    """Pseudo-regret ``sum_a (max mu - mu_a) * pulls_a``."""
    pulls = np.asarray(result.pulls if isinstance(result, EpisodeResult) else result)
    mu = np.asarray(means, dtype=np.float64)
    if mu.shape != pulls.shape:
        raise ConfigurationError(f"got {mu.size} means for {pulls.size} arms")
    return float(np.dot(mu.max() - mu, pulls))


def reward_table(models: Sequence[RewardModel], T: int, rng: RngStream) -> np.ndarray:
    """Per-arm reward sequences for one episode.

    Row ``a`` is drawn from ``rng.child(a)``; entry ``j`` is the reward
    dispensed on the (j+1)-th pull of arm ``a``. No arm can be pulled more
    than ``T - K + 1`` times, which fixes the row length.
    """
    K = len(models)
    length = T - K + 1
    table = np.empty((K, length), dtype=np.float64)
    for a, m in enumerate(models):
        table[a] = m.draw(rng.child(a).generator, length)
    return table


def check_checkpoints(checkpoints: Sequence[int], T: int) -> np.ndarray:
    cps = np.asarray(list(checkpoints), dtype=np.int64)
    if cps.size and (np.any(np.diff(cps) < 0) or cps[0] < 0 or cps[-1] > T):
        raise ConfigurationError("checkpoints must be sorted and lie in [0, T]")
    return cps


def run_episode(
    env: Sequence[RewardModel],
    policy,
    T: int,
    rng: RngStream,
    checkpoints: Sequence[int] = (),
    *,
    table: np.ndarray | None = None,
) -> EpisodeResult:
    """Simulate one horizon of ``policy`` on the arms ``env``.

    Arms are pulled once each in index order, then the policy's selection
    rule runs for the remaining rounds. ``policy`` is anything exposing
    ``kernel_args()`` (a :class:`~bandit_stability.policies.PolicySpec`).
    A checkpoint ``t`` records the pull counts after ``t`` rounds.
    """
    K = len(env)
    if K < 2:
        raise ConfigurationError("need at least two arms")
    if T < K:
        raise ConfigurationError(f"horizon T={T} is shorter than the initialization round (K={K})")
    cps = check_checkpoints(checkpoints, T)
    code, params = policy.kernel_args()
    if table is None:
        table = reward_table(env, T, rng)
    pulls, sums, sumsq, cp_pulls = _kernels.simulate(code, params, int(T), K, table, cps)
    return _result(env, pulls, sums, sumsq, cps, cp_pulls, rng)


def _result(env, pulls, sums, sumsq, cps, cp_pulls, rng) -> EpisodeResult:
    means = np.divide(sums, pulls, out=np.zeros_like(sums), where=pulls > 0)
    return EpisodeResult(
        pulls=pulls,
        means=means,
        sum_squares=sumsq,
        regret=regret(pulls, [m.mean for m in env]),
        checkpoints=[(int(t), cp_pulls[i].copy()) for i, t in enumerate(cps)],
        base_seed=rng.base_seed if rng is not None else None,
        replication=rng.replication if rng is not None else None,
    )


def trace_episode(env: Sequence[RewardModel], policy, T: int, rng: RngStream,
                  table: np.ndarray | None = None):
    """Arm sequence and per-round index vectors (pure-Python path)."""
    code, params = policy.kernel_args()
    if table is None:
        table = reward_table(env, T, rng)
    return _kernels.trace(code, params, int(T), len(env), table)
