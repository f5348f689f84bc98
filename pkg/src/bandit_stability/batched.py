"""Two-epoch, two-arm batched policies and samplers for their limit laws."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .env import ROLE_EPISODE, ConfigurationError, RewardModel, RngStream, derive_stream

ETC = "etc"
UCB = "ucb"
THOMPSON = "thompson"
KINDS = (ETC, UCB, THOMPSON)

BATCHED_NAMES = {"etc_batched": ETC, "ucb_batched": UCB, "thompson_batched": THOMPSON}
LIMIT_NAMES = {"limit_etc": ETC, "limit_ucb_batched": UCB, "limit_thompson_batched": THOMPSON}

# redraw cap for epoch-1 assignments that leave an arm unpulled
MAX_REDRAWS = 1000


def _check_params(kind: str, epsilon: float, pi_max: float, pi_min: float) -> None:
    if kind not in KINDS:
        raise ConfigurationError(f"kind: unknown batched policy {kind!r}")
    if kind == ETC and not 0.0 < epsilon <= 1.0:
        raise ConfigurationError(f"epsilon: ETC needs epsilon in (0, 1], got {epsilon}")
    if kind == UCB and not 0.5 < pi_max < 1.0:
        raise ConfigurationError(f"pi_max: batched UCB needs pi_max in (1/2, 1), got {pi_max}")
    if kind == THOMPSON and not 0.0 < pi_min <= pi_max < 1.0:
        raise ConfigurationError(
            f"pi_min/pi_max: need 0 < pi_min <= pi_max < 1, got ({pi_min}, {pi_max})")


@dataclass(frozen=True)
class BatchedSpec:
    """A batched policy: epoch 1 is ``T/2`` fair coin flips, epoch 2 flips a
    coin with probability ``p2`` chosen from the epoch-1 history.

    ``sigma`` is the reward noise scale assumed by the Thompson posterior.
    """

    kind: str
    T: int
    epsilon: float = 0.1
    pi_max: float = 0.9
    pi_min: float = 0.1
    sigma: float = 1.0

    def __post_init__(self):
        _check_params(self.kind, self.epsilon, self.pi_max, self.pi_min)
        if self.T < 4 or self.T % 2:
            raise ConfigurationError(f"T: batched horizon must be even and >= 4, got {self.T}")
        if not self.sigma > 0:
            raise ConfigurationError("sigma: must be > 0")

    @classmethod
    def from_name(cls, name: str, T: int, **kw) -> "BatchedSpec":
        if name not in BATCHED_NAMES:
            raise ConfigurationError(f"policy: unknown batched policy {name!r}")
        return cls(BATCHED_NAMES[name], T, **kw)

    @property
    def name(self) -> str:
        return f"{self.kind}_batched"

    @property
    def limit(self) -> "LimitSampleSpec":
        return LimitSampleSpec(self.kind, self.epsilon, self.pi_max, self.pi_min)


@dataclass
class BatchedResult:
    pulls: np.ndarray
    means: np.ndarray
    epoch1_pulls: np.ndarray
    epoch1_means: np.ndarray
    p2: float
    redraws: int = 0

    @property
    def T(self) -> int:
        return int(self.pulls.sum())


@dataclass(frozen=True)
class LimitSampleSpec:
    """Parameters of a limit law ``Y``; for Thompson the mixing weight
    ``pi_*`` is drawn uniform on (0, 1) and clipped to ``[pi_min, pi_max]``."""

    kind: str
    epsilon: float = 0.1
    pi_max: float = 0.9
    pi_min: float = 0.1

    def __post_init__(self):
        _check_params(self.kind, self.epsilon, self.pi_max, self.pi_min)

    @classmethod
    def from_name(cls, name: str, **kw) -> "LimitSampleSpec":
        if name not in LIMIT_NAMES:
            raise ConfigurationError(f"unknown limit sampler {name!r}")
        return cls(LIMIT_NAMES[name], **kw)


def posterior_prob_arm1(n1: int, n2: int, m1: float, m2: float, sigma: float = 1.0) -> float:
    """``P(beta_1 > beta_2 | data)`` under N(0, 1) priors and N(beta, sigma^2) rewards."""
    if n1 < 1 or n2 < 1:
        raise ConfigurationError("posterior needs n1, n2 >= 1")
    s2 = sigma * sigma
    mu1 = n1 * m1 / (n1 + s2)
    mu2 = n2 * m2 / (n2 + s2)
    var = s2 / (n1 + s2) + s2 / (n2 + s2)
    return float(ndtr((mu1 - mu2) / math.sqrt(var)))


def second_epoch_probability(spec: BatchedSpec, n: np.ndarray, m: np.ndarray) -> float:
    """``p2`` from epoch-1 counts and means; ties favour arm 1."""
    if spec.kind == ETC:
        return 1.0 - spec.epsilon / 2 if m[0] >= m[1] else spec.epsilon / 2
    if spec.kind == UCB:
        bonus = math.log(spec.T / 4)
        u1 = m[0] + math.sqrt(bonus / n[0])
        u2 = m[1] + math.sqrt(bonus / n[1])
        return spec.pi_max if u1 >= u2 else 1.0 - spec.pi_max
    p = posterior_prob_arm1(int(n[0]), int(n[1]), float(m[0]), float(m[1]), spec.sigma)
    if p >= spec.pi_max:
        return spec.pi_max
    if p > spec.pi_min:
        return p
    return spec.pi_min


def run_batched(spec: BatchedSpec, rewards: list[RewardModel], rng: RngStream) -> BatchedResult:
    """One episode. Arm ``a`` rewards come from ``rng.child(a)``, the
    assignment coins from ``rng.child(2)``. Epoch-1 assignment vectors that
    leave an arm unpulled are redrawn; the redraw count is returned."""
    if len(rewards) != 2:
        raise ConfigurationError(f"K: batched policies take exactly 2 arms, got {len(rewards)}")
    half = spec.T // 2
    coins = rng.child(2).generator
    redraws = 0
    while True:
        a1 = coins.random(half) < 0.5
        k1 = int(np.count_nonzero(a1))
        if 0 < k1 < half:
            break
        redraws += 1
        if redraws > MAX_REDRAWS:
            raise RuntimeError("epoch-1 assignment redraw limit exceeded")
    n1 = np.array([k1, half - k1], dtype=np.int64)
    draws = [m.draw(rng.child(a).generator, spec.T) for a, m in enumerate(rewards)]
    m1 = np.array([draws[0][:n1[0]].sum() / n1[0], draws[1][:n1[1]].sum() / n1[1]])
    p2 = second_epoch_probability(spec, n1, m1)
    k2 = int(np.count_nonzero(coins.random(half) < p2))
    n = n1 + np.array([k2, half - k2], dtype=np.int64)
    means = np.array([draws[0][:n[0]].sum() / n[0] if n[0] else 0.0,
                      draws[1][:n[1]].sum() / n[1] if n[1] else 0.0])
    return BatchedResult(n, means, n1, m1, float(p2), redraws)


def standardized_error(result: BatchedResult, true_mean: float, arm: int) -> float:
    """``sqrt(n_a) (mean_a - true_mean)`` for a 0-based ``arm``."""
    n = int(result.pulls[arm])
    if n < 1:
        raise ConfigurationError(f"arm {arm} was never pulled")
    return math.sqrt(n) * (float(result.means[arm]) - true_mean)


def sample_limit_Y(spec: LimitSampleSpec, rng: RngStream, size: int | None = None):
    """Draw from the limit law ``Y``; a scalar when ``size`` is None."""
    gen = rng.generator
    m = 1 if size is None else int(size)
    z = gen.standard_normal((4, m))
    z1, z2, z3, z4 = z
    if spec.kind == ETC:
        e = spec.epsilon
        y = np.where(z1 > z2,
                     math.sqrt(1 / (3 - e)) * (z1 - math.sqrt(2 - e) * z3),
                     math.sqrt(1 / (1 + e)) * (z1 - math.sqrt(e) * z3))
    elif spec.kind == UCB:
        p = spec.pi_max
        hi = math.sqrt(0.5 / (0.5 + p)) * z1 + math.sqrt(p / (0.5 + p)) * z3
        lo = math.sqrt(0.5 / (1.5 - p)) * z1 + math.sqrt((1 - p) / (1.5 - p)) * z3
        y = np.where(z1 > z2, hi, lo)
    else:
        p = np.clip(gen.random(m), spec.pi_min, spec.pi_max)
        y = (np.sqrt((1.5 - p) / (1 + 2 * p)) * (math.sqrt(0.5) * z1 + np.sqrt(p) * z3)
             - np.sqrt((0.5 + p) / (3 - 2 * p)) * (math.sqrt(0.5) * z2 + np.sqrt(1 - p) * z4))
    return float(y[0]) if size is None else y


def limit_moments(spec: LimitSampleSpec) -> tuple[float, float]:
    """Closed-form ``(E[Y], Var[Y])`` for the ETC and UCB laws.

    Both branches have unit second moment, and ``E[Z1; Z1 > Z2] = 1/(2 sqrt(pi))``.
    """
    c = 1.0 / (2.0 * math.sqrt(math.pi))
    if spec.kind == ETC:
        e = spec.epsilon
        mean = c * (1 / math.sqrt(3 - e) - 1 / math.sqrt(1 + e))
    elif spec.kind == UCB:
        p = spec.pi_max
        mean = c * (math.sqrt(0.5 / (0.5 + p)) - math.sqrt(0.5 / (1.5 - p)))
    else:
        raise ConfigurationError("closed-form moments cover ETC and UCB only")
    return mean, 1.0 - mean * mean


def run_batched_ensemble(config, workers: int | None = None):
    """Batched counterpart of :func:`diagnostics.run_ensemble`.

    Epoch-1 statistics, ``p2`` and redraw counts land in ``Ensemble.extra``.
    """
    from .diagnostics import Ensemble

    spec: BatchedSpec = config.policy
    if spec.T != config.T:
        raise ConfigurationError(f"T: batched spec horizon {spec.T} differs from config T={config.T}")
    if config.checkpoints:
        raise ConfigurationError("checkpoints: not supported for batched policies")
    R = config.replications
    pulls = np.zeros((R, 2), dtype=np.int64)
    means = np.zeros((R, 2))
    e1_pulls = np.zeros((R, 2), dtype=np.int64)
    e1_means = np.zeros((R, 2))
    p2 = np.zeros(R)
    redraws = np.zeros(R, dtype=np.int64)

    def work(block):
        for r in block:
            res = run_batched(spec, config.rewards, derive_stream(config.base_seed, r, ROLE_EPISODE))
            pulls[r], means[r] = res.pulls, res.means
            e1_pulls[r], e1_means[r] = res.epoch1_pulls, res.epoch1_means
            p2[r], redraws[r] = res.p2, res.redraws

    workers = workers or os.cpu_count() or 1
    step = max(1, math.ceil(R / (4 * workers)))
    blocks = [range(s, min(R, s + step)) for s in range(0, R, step)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for f in [pool.submit(work, b) for b in blocks]:
            f.result()
    mu = np.array([m.mean for m in config.rewards])
    # second moments are not tracked in batched runs
    return Ensemble(
        T=config.T, base_seed=config.base_seed, rewards=list(config.rewards),
        pulls=pulls, means=means, sum_squares=np.full((R, 2), np.nan),
        regret=(mu.max() - mu) @ pulls.T.astype(np.float64),
        checkpoint_times=np.zeros(0, dtype=np.int64),
        checkpoint_pulls=np.zeros((R, 0, 2), dtype=np.int64),
        extra={"epoch1_pulls": e1_pulls, "epoch1_means": e1_means, "p2": p2, "redraws": redraws},
    )
