import math

import numpy as np
import pytest

from bandit_stability.batched import (
    BatchedResult,
    BatchedSpec,
    LimitSampleSpec,
    limit_moments,
    posterior_prob_arm1,
    run_batched,
    sample_limit_Y,
    second_epoch_probability,
    standardized_error,
)
from bandit_stability.diagnostics import EnsembleConfig, ks_normality, ks_two_sample, run_ensemble
from bandit_stability.env import ROLE_LIMIT, ConfigurationError, RewardModel, derive_stream

import oracles

POSTERIOR_2_2_1_0 = 0.7928919108787374
ETC_01_MEAN = -0.10331506502800677
ETC_01_VAR = 0.9893259973382587
UCB_09_MEAN = -0.08893225184594253
UCB_09_VAR = 0.9920910545816099


def test_spec_validation():
    with pytest.raises(ConfigurationError, match="T"):
        BatchedSpec("etc", 7)
    with pytest.raises(ConfigurationError, match="T"):
        BatchedSpec("etc", 2)
    with pytest.raises(ConfigurationError, match="epsilon"):
        BatchedSpec("etc", 100, epsilon=1.5)
    with pytest.raises(ConfigurationError, match="pi_max"):
        BatchedSpec("ucb", 100, pi_max=0.5)
    with pytest.raises(ConfigurationError):
        BatchedSpec("thompson", 100, pi_min=0.6, pi_max=0.5)
    with pytest.raises(ConfigurationError, match="policy"):
        BatchedSpec.from_name("greedy", 100)


def test_etc_eps_one_is_fair():
    spec = BatchedSpec("etc", 100, epsilon=1.0)
    for m in ([0.0, 1.0], [1.0, 0.0]):
        assert second_epoch_probability(spec, np.array([25, 25]), np.array(m)) == 0.5


def test_ties_favour_arm_one():
    n = np.array([25, 25])
    m = np.array([0.3, 0.3])
    assert second_epoch_probability(BatchedSpec("etc", 100), n, m) == 0.95
    assert second_epoch_probability(BatchedSpec("ucb", 100, pi_max=0.8), n, m) == 0.8


def test_thompson_clipping():
    spec = BatchedSpec("thompson", 100, pi_min=0.2, pi_max=0.7)
    assert second_epoch_probability(spec, np.array([20, 30]), np.array([2.0, 0.0])) == 0.7
    assert second_epoch_probability(spec, np.array([20, 30]), np.array([-2.0, 0.0])) == 0.2
    p = second_epoch_probability(spec, np.array([25, 25]), np.array([0.05, 0.0]))
    assert 0.2 < p < 0.7


def test_posterior_prob():
    assert posterior_prob_arm1(5, 5, 0.3, 0.3) == 0.5
    assert posterior_prob_arm1(2, 2, 1.0, 0.0) == pytest.approx(POSTERIOR_2_2_1_0, abs=1e-12)
    assert float(oracles.posterior_prob(2, 2, 1, 0)) == pytest.approx(POSTERIOR_2_2_1_0, abs=1e-15)
    with pytest.raises(ConfigurationError):
        posterior_prob_arm1(0, 3, 0.0, 0.0)


def test_posterior_prob_monte_carlo():
    n1, n2, m1, m2, s = 3, 5, 0.4, 0.1, 1.3
    gen = derive_stream(0, 0, ROLE_LIMIT).generator
    s2 = s * s
    b1 = n1 * m1 / (n1 + s2) + math.sqrt(s2 / (n1 + s2)) * gen.standard_normal(10**7)
    b2 = n2 * m2 / (n2 + s2) + math.sqrt(s2 / (n2 + s2)) * gen.standard_normal(10**7)
    p = np.mean(b1 > b2)
    se = math.sqrt(p * (1 - p) / 1e7)
    assert abs(posterior_prob_arm1(n1, n2, m1, m2, s) - p) <= 3 * se


def test_run_batched_invariants(gaussian_arms):
    for kind in ("etc", "ucb", "thompson"):
        spec = BatchedSpec(kind, 200)
        for r in range(20):
            res = run_batched(spec, gaussian_arms, derive_stream(1, r, 0))
            assert res.epoch1_pulls.sum() == 100 and res.pulls.sum() == 200
            assert np.all(res.epoch1_pulls >= 1)
            assert np.all(res.pulls >= res.epoch1_pulls)


def test_run_batched_needs_two_arms(gaussian_arms):
    with pytest.raises(ConfigurationError, match="K"):
        run_batched(BatchedSpec("etc", 100), gaussian_arms * 2, derive_stream(0, 0, 0))


def test_zero_pull_redraw(gaussian_arms):
    # with T = 4 an epoch-1 assignment leaves an arm empty with probability 1/2
    redraws = [run_batched(BatchedSpec("etc", 4), gaussian_arms, derive_stream(0, r, 0)).redraws
               for r in range(200)]
    assert sum(redraws) > 0
    assert all(run_batched(BatchedSpec("etc", 4), gaussian_arms, derive_stream(0, r, 0)).epoch1_pulls.min() >= 1
               for r in range(50))


def test_standardized_error():
    res = BatchedResult(np.array([100, 100]), np.array([0.1, 0.0]), np.array([50, 50]), np.zeros(2), 0.5)
    assert standardized_error(res, 0.0, 0) == pytest.approx(1.0, abs=1e-15)
    assert standardized_error(res, 0.0, 1) == 0.0
    res.pulls[1] = 0
    with pytest.raises(ConfigurationError):
        standardized_error(res, 0.0, 1)


@pytest.fixture(scope="module")
def etc_ensemble():
    arms = [RewardModel.gaussian(), RewardModel.gaussian()]
    return run_ensemble(EnsembleConfig(BatchedSpec("etc", 2000), arms, T=2000, replications=5000, base_seed=4), 1)


def test_etc_symmetry_of_p2(etc_ensemble):
    p2 = etc_ensemble.extra["p2"]
    se = p2.std() / math.sqrt(p2.size)
    assert abs(p2.mean() - 0.5) <= 3 * se


def test_second_epoch_is_binomial(etc_ensemble):
    e = etc_ensemble
    k2 = e.pulls[:, 0] - e.extra["epoch1_pulls"][:, 0]
    p2 = e.extra["p2"]
    half = 1000
    for p in np.unique(p2):
        x = k2[p2 == p]
        mean, var = half * p, half * p * (1 - p)
        assert abs(x.mean() - mean) <= 5 * math.sqrt(var / x.size)
        # SE of a sample variance is about var * sqrt(2 / m)
        assert abs(x.var(ddof=1) - var) <= 5 * var * math.sqrt(2 / x.size)


def test_identical_arm_symmetry(etc_ensemble):
    e = etc_ensemble
    assert ks_two_sample(e.pulls[:, 0], e.pulls[:, 1]).pvalue > 0.01
    assert ks_two_sample(e.means[:, 0], e.means[:, 1]).pvalue > 0.01


def test_etc_bimodal():
    arms = [RewardModel.gaussian(), RewardModel.gaussian()]
    mids = []
    for T in (1000, 10_000):
        e = run_ensemble(EnsembleConfig(BatchedSpec("etc", T, epsilon=0.1), arms, T=T,
                                        replications=2000, base_seed=6), 1)
        f = e.pulls[:, 0] / T
        mids.append(np.mean((f >= 0.45) & (f <= 0.55)))
    assert mids[1] <= mids[0] and mids[1] < 0.05


def test_limit_oracle_values():
    m, v = oracles.etc_limit_moments(0.1)
    assert (float(m), float(v)) == pytest.approx((ETC_01_MEAN, ETC_01_VAR), abs=1e-15)
    m, v = oracles.ucb_limit_moments(0.9)
    assert (float(m), float(v)) == pytest.approx((UCB_09_MEAN, UCB_09_VAR), abs=1e-15)
    assert limit_moments(LimitSampleSpec("etc", epsilon=0.1)) == pytest.approx((ETC_01_MEAN, ETC_01_VAR), abs=1e-14)
    assert limit_moments(LimitSampleSpec("ucb", pi_max=0.9)) == pytest.approx((UCB_09_MEAN, UCB_09_VAR), abs=1e-14)


def test_limit_scalar_and_vector():
    y = sample_limit_Y(LimitSampleSpec("ucb"), derive_stream(0, 0, ROLE_LIMIT))
    assert isinstance(y, float)
    assert sample_limit_Y(LimitSampleSpec("thompson"), derive_stream(0, 0, ROLE_LIMIT), size=10).shape == (10,)


def test_limit_etc_eps1_is_standard_normal():
    y = sample_limit_Y(LimitSampleSpec("etc", epsilon=1.0), derive_stream(1, 0, ROLE_LIMIT), size=10**6)
    assert ks_normality(y).statistic < 0.002


def test_limit_etc_variance():
    y = sample_limit_Y(LimitSampleSpec("etc", epsilon=0.1), derive_stream(2, 0, ROLE_LIMIT), size=10**6)
    assert abs(y.var() / ETC_01_VAR - 1) < 0.01


def test_limit_ucb_mean():
    y = sample_limit_Y(LimitSampleSpec("ucb", pi_max=0.9), derive_stream(3, 0, ROLE_LIMIT), size=10**6)
    assert abs(y.mean() - UCB_09_MEAN) <= 3 * y.std() / 1000


def test_limit_spec_names():
    assert LimitSampleSpec.from_name("limit_thompson_batched").kind == "thompson"
    with pytest.raises(ConfigurationError):
        LimitSampleSpec.from_name("limit_nope")
