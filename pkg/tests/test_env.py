import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bandit_stability.env import (
    ROLE_EPISODE,
    ArmState,
    ConfigurationError,
    RewardModel,
    derive_stream,
    regret,
    reward_table,
    run_episode,
    sample,
)
from bandit_stability.policies import PolicySpec


def test_reward_model_validation():
    with pytest.raises(ConfigurationError):
        RewardModel.gaussian(0.0, 0.0)
    with pytest.raises(ConfigurationError):
        RewardModel.bernoulli(1.5)
    with pytest.raises(ConfigurationError):
        RewardModel("cauchy", 0.0)


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_degenerate_bernoulli(p):
    rng = derive_stream(1, 0, ROLE_EPISODE)
    m = RewardModel.bernoulli(p)
    assert {sample(m, rng) for _ in range(50)} == {p}


def test_gaussian_draw_mean():
    x = RewardModel.gaussian().draw(derive_stream(3, 0, 0).generator, 10**6)
    assert -0.005 <= x.mean() <= 0.005


@pytest.mark.parametrize("model", [RewardModel.gaussian(0.7, 2.0), RewardModel.bernoulli(0.3)])
def test_sample_mean_within_five_se(model):
    x = model.draw(derive_stream(9, 1, 0).generator, 10**6)
    assert abs(x.mean() - model.mean) <= 5 * model.sd / 1000


def test_arm_state():
    s = ArmState()
    assert not s.initialized and s.mean == 0.0
    for r in (1.0, 2.0, 6.0):
        s.update(r)
    assert s.pulls == 3 and s.mean == 3.0


def test_stream_determinism_and_independence():
    a = derive_stream(42, 7, 0).generator.random(100)
    b = derive_stream(42, 7, 0).generator.random(100)
    c = derive_stream(42, 7, 1).generator.random(100)
    d = derive_stream(43, 7, 0).generator.random(100)
    assert np.array_equal(a, b)
    assert np.count_nonzero(a != c) >= 95
    assert not np.array_equal(a, d)


def test_stream_seed_range():
    with pytest.raises(ConfigurationError):
        derive_stream(2**64, 0, 0)
    with pytest.raises(ConfigurationError):
        derive_stream(-1, 0, 0)


@pytest.mark.parametrize("means,pulls,expected", [
    ((0.0, 0.0), (600, 400), 0.0),
    ((1.0, 0.0), (900, 100), 100.0),
    ((0.5, 0.5, 0.2), (400, 400, 200), 60.0),
])
def test_regret_examples(means, pulls, expected):
    assert regret(pulls, means) == pytest.approx(expected, abs=1e-12)


def test_regret_length_mismatch():
    with pytest.raises(ConfigurationError):
        regret((1, 2, 3), (0.0, 1.0))


def test_initialization_only(gaussian_arms):
    for name in ("moss", "ucb1", "kl_ucb_switch"):
        res = run_episode(gaussian_arms, PolicySpec(name), 2, derive_stream(0, 0, 0))
        assert res.pulls.tolist() == [1, 1]


def test_horizon_shorter_than_k(gaussian_arms):
    with pytest.raises(ConfigurationError):
        run_episode(gaussian_arms * 2, PolicySpec("moss"), 3, derive_stream(0, 0, 0))


def test_conservation_and_zero_regret(gaussian_arms):
    res = run_episode(gaussian_arms, PolicySpec("moss"), 10_000, derive_stream(5, 0, 0),
                      checkpoints=[0, 1, 2, 500, 2500, 10_000])
    assert res.pulls.sum() == 10_000 and res.regret == 0.0
    for t, p in res.checkpoints:
        assert p.sum() == t


def test_always_arm(gaussian_arms):
    res = run_episode(gaussian_arms, PolicySpec("always_arm", arm=0), 1000, derive_stream(0, 0, 0))
    assert res.pulls.tolist() == [999, 1]


def test_episode_determinism(gaussian_arms):
    a = run_episode(gaussian_arms, PolicySpec("ada_ucb"), 3000, derive_stream(11, 3, 0), [750])
    b = run_episode(gaussian_arms, PolicySpec("ada_ucb"), 3000, derive_stream(11, 3, 0), [750])
    assert a.pulls.tobytes() == b.pulls.tobytes()
    assert a.means.tobytes() == b.means.tobytes()
    assert a.checkpoints[0][1].tobytes() == b.checkpoints[0][1].tobytes()


def test_means_match_replayed_log():
    """The reported means are the averages of exactly the rewards each arm received."""
    arms = [RewardModel.gaussian(0.0), RewardModel.bernoulli(0.4), RewardModel.gaussian(0.1, 2.0)]
    T = 2000
    rng = derive_stream(8, 0, 0)
    table = reward_table(arms, T, rng)
    res = run_episode(arms, PolicySpec("kl_ucb"), T, rng, table=table)
    for a in range(3):
        n = res.pulls[a]
        assert res.means[a] == pytest.approx(table[a, :n].mean(), rel=1e-12, abs=1e-12)
        assert res.sum_squares[a] == pytest.approx((table[a, :n] ** 2).sum(), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(K=st.integers(2, 5), T=st.integers(5, 400), seed=st.integers(0, 2**32),
       name=st.sampled_from(["ucb1", "moss", "anytime_moss", "oc_ucb", "ada_ucb", "kl_moss", "round_robin"]))
def test_conservation_property(K, T, seed, name):
    T = max(T, K)
    arms = [RewardModel.gaussian(0.1 * a) for a in range(K)]
    cps = sorted({0, K, T // 2, T})
    res = run_episode(arms, PolicySpec(name), T, derive_stream(seed, 0, 0), cps)
    assert res.pulls.sum() == T and np.all(res.pulls >= 1)
    prev = np.zeros(K, dtype=np.int64)
    for t, p in res.checkpoints:
        assert p.sum() == t and np.all(p >= prev)
        prev = p
