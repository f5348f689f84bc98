"""Replicated ensembles and the empirical stability / inference diagnostics."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .env import (
    ROLE_EPISODE,
    ConfigurationError,
    EpisodeResult,
    RewardModel,
    check_checkpoints,
    derive_stream,
    reward_table,
)
from .policies import PolicySpec

log = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.01, 0.05, 0.1, 0.2, 0.3)
HIST_BINS = 50
KNOWN = "known"
PLUGIN = "plugin"


@dataclass
class EnsembleConfig:
    """One Monte Carlo experiment: a policy, arms, horizon and replication count."""

    policy: object  # PolicySpec or batched.BatchedSpec
    rewards: list[RewardModel]
    T: int = 10_000
    replications: int = 5000
    base_seed: int = 0
    checkpoints: tuple[int, ...] = ()
    level: float = 0.95
    variance_mode: str = KNOWN
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    bins: int = HIST_BINS

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigurationError("replications: must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ConfigurationError("level: must lie in (0, 1)")
        if self.variance_mode not in (KNOWN, PLUGIN):
            raise ConfigurationError(f"variance_mode: expected 'known' or 'plugin', got {self.variance_mode!r}")
        if len(self.rewards) < 2:
            raise ConfigurationError("K: need at least two arms")
        if self.T < len(self.rewards):
            raise ConfigurationError(f"T: horizon {self.T} shorter than K={len(self.rewards)}")
        check_checkpoints(self.checkpoints, self.T)

    @property
    def K(self) -> int:
        return len(self.rewards)


@dataclass
class Ensemble:
    """Replicated episode results stored column-wise; row ``r`` is replication ``r``."""

    T: int
    base_seed: int
    rewards: list[RewardModel]
    pulls: np.ndarray
    means: np.ndarray
    sum_squares: np.ndarray
    regret: np.ndarray
    checkpoint_times: np.ndarray
    checkpoint_pulls: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.pulls.shape[1]

    @property
    def R(self) -> int:
        return self.pulls.shape[0]

    def __len__(self):
        return self.R

    def __getitem__(self, r: int) -> EpisodeResult:
        return EpisodeResult(
            pulls=self.pulls[r].copy(),
            means=self.means[r].copy(),
            sum_squares=self.sum_squares[r].copy(),
            regret=float(self.regret[r]),
            checkpoints=[(int(t), self.checkpoint_pulls[r, i].copy())
                         for i, t in enumerate(self.checkpoint_times)],
            base_seed=self.base_seed,
            replication=r,
        )

    def pulls_at(self, t: int) -> np.ndarray | None:
        hit = np.flatnonzero(self.checkpoint_times == t)
        return None if hit.size == 0 else self.checkpoint_pulls[:, hit[0], :]


def default_workers() -> int:
    return os.cpu_count() or 1


def _chunks(R: int, workers: int) -> list[range]:
    size = max(1, math.ceil(R / (4 * workers)))
    return [range(s, min(R, s + size)) for s in range(0, R, size)]


def run_ensemble(config: EnsembleConfig, workers: int | None = None) -> Ensemble:
    """Simulate ``config.replications`` independent episodes.

    Replication ``r`` draws from ``derive_stream(base_seed, r, ROLE_EPISODE)``
    only, so the ensemble is identical for every ``workers`` value.
    """
    from .batched import BatchedSpec, run_batched_ensemble

    if isinstance(config.policy, BatchedSpec):
        return run_batched_ensemble(config, workers)
    if not isinstance(config.policy, PolicySpec):
        raise ConfigurationError(f"policy: unsupported policy object {config.policy!r}")
    workers = workers or default_workers()
    R, K, T = config.replications, config.K, config.T
    cps = check_checkpoints(config.checkpoints, T)
    code, params = config.policy.kernel_args()
    pulls = np.zeros((R, K), dtype=np.int64)
    sums = np.zeros((R, K))
    sumsq = np.zeros((R, K))
    cp_pulls = np.zeros((R, cps.size, K), dtype=np.int64)

    def work(block: range) -> None:
        for r in block:
            stream = derive_stream(config.base_seed, r, ROLE_EPISODE)
            table = reward_table(config.rewards, T, stream)
            try:
                out = _kernels.simulate(code, params, T, K, table, cps)
            except Exception as exc:
                raise RuntimeError(f"replication {r} failed: {exc}") from exc
            pulls[r], sums[r], sumsq[r], cp_pulls[r] = out

    blocks = _chunks(R, workers)
    if workers == 1:
        for b in blocks:
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for f in [pool.submit(work, b) for b in blocks]:
                f.result()
    mu = np.array([m.mean for m in config.rewards])
    return Ensemble(
        T=T,
        base_seed=config.base_seed,
        rewards=list(config.rewards),
        pulls=pulls,
        means=sums / pulls,
        sum_squares=sumsq,
        regret=(mu.max() - mu) @ pulls.T.astype(np.float64),
        checkpoint_times=cps,
        checkpoint_pulls=cp_pulls,
    )


def proportion_se(p: float, R: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / R) if R > 0 else math.nan


@dataclass
class StabilityReport:
    """Pull-count concentration around the reference ``n* = T/K``.

    ``band_probability[a][i]`` estimates ``P(|n_a/n* - 1| > deltas[i])``.
    """

    T: int
    K: int
    R: int
    reference: float
    deltas: tuple[float, ...]
    band_probability: np.ndarray
    band_se: np.ndarray
    ratio_mean: np.ndarray
    ratio_sd: np.ndarray
    ratio_quantiles: np.ndarray  # (K, 5) at 5/25/50/75/95 %
    bin_edges: np.ndarray
    histogram: np.ndarray  # mass of n_1/T per bin

    def rows(self):
        for a in range(self.K):
            for i, d in enumerate(self.deltas):
                yield {
                    "arm": a + 1,
                    "delta": d,
                    "band_probability": float(self.band_probability[a, i]),
                    "mc_se": float(self.band_se[a, i]),
                    "ratio_mean": float(self.ratio_mean[a]),
                    "ratio_sd": float(self.ratio_sd[a]),
                }

    def histogram_rows(self):
        for i, m in enumerate(self.histogram):
            yield {"bin_lo": float(self.bin_edges[i]), "bin_hi": float(self.bin_edges[i + 1]),
                   "mass": float(m)}


def stability_report(ensemble: Ensemble, deltas: Sequence[float] = DEFAULT_DELTAS,
                     bins: int = HIST_BINS) -> StabilityReport:
    R, K, T = ensemble.R, ensemble.K, ensemble.T
    if R == 0:
        raise ConfigurationError("empty ensemble")
    ref = T / K
    ratio = ensemble.pulls / ref
    dev = np.abs(ratio - 1.0)
    deltas = tuple(float(d) for d in deltas)
    band = np.array([[np.count_nonzero(dev[:, a] > d) / R for d in deltas] for a in range(K)])
    band_se = np.vectorize(lambda p: proportion_se(p, R))(band) if band.size else band
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(ensemble.pulls[:, 0] / T, bins=edges)
    return StabilityReport(
        T=T, K=K, R=R, reference=ref, deltas=deltas,
        band_probability=band, band_se=band_se,
        ratio_mean=ratio.mean(axis=0), ratio_sd=ratio.std(axis=0),
        ratio_quantiles=np.quantile(ratio, [0.05, 0.25, 0.5, 0.75, 0.95], axis=0).T,
        bin_edges=edges, histogram=counts / R,
    )


@dataclass
class CoverageReport:
    """Empirical coverage of the Wald interval ``mean +/- z sd / sqrt(n)`` for one arm."""

    arm: int
    level: float
    variance_mode: str
    coverage: float
    mc_se: float
    mean_width: float
    covered: int
    used: int
    excluded: int

    def row(self) -> dict:
        return {
            "arm": self.arm + 1, "level": self.level, "variance_mode": self.variance_mode,
            "coverage": self.coverage, "mc_se": self.mc_se, "mean_width": self.mean_width,
            "covered": self.covered, "used": self.used, "excluded": self.excluded,
        }


def wald_coverage(ensemble: Ensemble, arm: int, level: float = 0.95,
                  true_mean: float | None = None, variance_mode: str = KNOWN,
                  sigma: float | None = None) -> CoverageReport:
    """Coverage of the nominal ``level`` Wald interval for ``arm`` (0-based).

    Known-variance mode uses ``sigma`` (default: the arm's reward SD);
    plug-in mode uses the sample SD and needs two pulls. Replications that
    cannot form the interval are excluded and counted.
    """
    if not 0.0 < level < 1.0:
        raise ConfigurationError("level must lie in (0, 1)")
    model = ensemble.rewards[arm]
    mu = model.mean if true_mean is None else float(true_mean)
    n = ensemble.pulls[:, arm].astype(np.float64)
    mean = ensemble.means[:, arm]
    z = stats.norm.ppf(0.5 * (1.0 + level))
    if variance_mode == KNOWN:
        sd = np.full_like(n, model.sd if sigma is None else float(sigma))
        ok = n >= 1
    elif variance_mode == PLUGIN:
        with np.errstate(invalid="ignore", divide="ignore"):
            var = (ensemble.sum_squares[:, arm] - n * mean * mean) / (n - 1.0)
        sd = np.sqrt(np.clip(var, 0.0, None))
        ok = n >= 2
    else:
        raise ConfigurationError(f"unknown variance mode {variance_mode!r}")
    used = int(np.count_nonzero(ok))
    half = np.where(ok, z * sd / np.sqrt(np.where(ok, n, 1.0)), np.nan)
    hit = ok & (np.abs(mean - mu) <= half)
    covered = int(np.count_nonzero(hit))
    cov = covered / used if used else math.nan
    return CoverageReport(
        arm=arm, level=level, variance_mode=variance_mode, coverage=cov,
        mc_se=proportion_se(cov, used), mean_width=float(np.nanmean(2 * half)) if used else math.nan,
        covered=covered, used=used, excluded=ensemble.R - used,
    )


@dataclass
class WitnessReport:
    """Frequency of the instability witness event and of the tail event.

    The witness is ``{n_1/T >= (K+1)/(2K)} and {n_a/T <= 1/(2K) for a >= 2}``.
    The tail event asks every ``n_{a, T/(2K)}`` to lie in
    ``[T/(4K^2), 3T/(4K^2)]``. The boundary ``lambda_T = mu - c/sqrt(T)`` of the
    instability argument is a proof device and plays no role here.
    """

    K: int
    T: int
    R: int
    upper_threshold: float
    lower_threshold: float
    probability: float
    mc_se: float
    tail_event_probability: float | None
    tail_event_se: float | None
    tail_event_missing: bool

    def row(self) -> dict:
        return {
            "K": self.K, "T": self.T, "R": self.R,
            "upper_threshold": self.upper_threshold, "lower_threshold": self.lower_threshold,
            "witness_probability": self.probability, "mc_se": self.mc_se,
            "tail_event_probability": "" if self.tail_event_probability is None else self.tail_event_probability,
            "tail_event_se": "" if self.tail_event_se is None else self.tail_event_se,
        }


def witness_probability(ensemble: Ensemble, K: int | None = None) -> WitnessReport:
    K = K or ensemble.K
    R, T = ensemble.R, ensemble.T
    if R == 0:
        raise ConfigurationError("empty ensemble")
    upper = (K + 1) / (2 * K)
    lower = 1 / (2 * K)
    frac = ensemble.pulls / T
    hit = (frac[:, 0] >= upper) & np.all(frac[:, 1:] <= lower, axis=1)
    p = np.count_nonzero(hit) / R
    tail = tail_se = None
    missing = True
    t_mid = T // (2 * K)
    if T % (2 * K) == 0:
        at = ensemble.pulls_at(t_mid)
        if at is not None:
            inside = np.all((at >= T / (4 * K * K)) & (at <= 3 * T / (4 * K * K)), axis=1)
            tail = np.count_nonzero(inside) / R
            tail_se = proportion_se(tail, R)
            missing = False
    if missing:
        log.warning("checkpoint T/(2K)=%s not recorded; tail event omitted", T / (2 * K))
    return WitnessReport(K, T, R, upper, lower, p, proportion_se(p, R), tail, tail_se, missing)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float


def ks_normality(values: Sequence[float]) -> KsResult:
    """One-sample KS test against N(0, 1) with the asymptotic p-value."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 100:
        raise ConfigurationError("ks_normality needs at least 100 values")
    res = stats.kstest(x, "norm", method="asymp")
    return KsResult(float(res.statistic), float(res.pvalue))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KsResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ConfigurationError("ks_two_sample needs two nonempty samples")
    res = stats.ks_2samp(a, b, method="asymp")
    return KsResult(float(res.statistic), float(res.pvalue))


def standardized_errors(ensemble: Ensemble, arm: int, true_mean: float | None = None) -> np.ndarray:
    """``sqrt(n_a) (mean_a - mu_a)`` per replication (arms with zero pulls dropped)."""
    mu = ensemble.rewards[arm].mean if true_mean is None else true_mean
    n = ensemble.pulls[:, arm]
    ok = n > 0
    return np.sqrt(n[ok]) * (ensemble.means[ok, arm] - mu)
