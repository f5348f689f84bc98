import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from bandit_stability.env import ArmState, ConfigurationError
from bandit_stability.kl import (
    KlBudget,
    MeanInterval,
    budget_for,
    index_kl_switch,
    kl_div,
    kl_index,
    pinsker_check,
    switch_threshold,
)
from bandit_stability.policies import IndexContext, PolicySpec, index_moss

import oracles

KL_BERN_QUARTERS = 0.5493061443340548  # 0.5 ln 3
KL_MOSS_BUDGET_400_25 = 0.11090354888959125


def test_kl_div_examples():
    for fam in ("gaussian", "bernoulli"):
        assert kl_div(fam, 0.3, 0.3) == 0.0
    assert kl_div("bernoulli", 0.25, 0.75) == pytest.approx(KL_BERN_QUARTERS, rel=1e-14)
    assert kl_div("gaussian", 0.0, 1.0) == 0.5
    assert kl_div("gaussian", 0.0, 1.0, sigma=2.0) == 0.125


def test_kl_div_boundaries():
    assert kl_div("bernoulli", 0.3, 1.0) == math.inf
    assert kl_div("bernoulli", 0.3, 0.0) == math.inf
    assert kl_div("bernoulli", 0.0, 0.4) == pytest.approx(-math.log(0.6), rel=1e-14)
    assert kl_div("bernoulli", 1.0, 0.4) == pytest.approx(-math.log(0.4), rel=1e-14)
    with pytest.raises(ConfigurationError):
        kl_div("bernoulli", 1.2, 0.5)


def test_kl_div_matches_oracle():
    rng = np.random.default_rng(0)
    for p, q in rng.uniform(0.001, 0.999, size=(200, 2)):
        assert kl_div("bernoulli", p, q) == pytest.approx(float(oracles.bernoulli_kl(p, q)), rel=1e-12, abs=1e-15)


def test_kl_index_examples():
    assert kl_index(0.3, 0.0, "bernoulli") == 0.3
    assert kl_index(0.0, math.log(2), "bernoulli") == pytest.approx(0.5, abs=1e-9)
    assert kl_index(0.0, 0.5, "gaussian", MeanInterval(-10, 10)) == pytest.approx(1.0, abs=1e-9)
    assert kl_index(9.5, 10.0, "gaussian") == 10.0
    assert kl_index(0.2, 100.0, "bernoulli") == pytest.approx(1.0, abs=1e-9)


def test_kl_index_returns_feasible_side():
    for b in (1e-4, 0.01, 0.3, 2.0):
        q = kl_index(0.37, b, "bernoulli")
        assert kl_div("bernoulli", 0.37, q) <= b


def test_budget_types():
    with pytest.raises(ConfigurationError):
        KlBudget(-1.0)
    with pytest.raises(ConfigurationError):
        KlBudget(math.inf)
    with pytest.raises(ConfigurationError):
        MeanInterval(1.0, 1.0)


def test_budget_examples():
    assert float(budget_for("kl_moss", 400, 10, 400, 2)) == 0.0
    assert float(budget_for("kl_ucb_pp", 200, 10, 400, 2)) == 0.0
    assert float(budget_for("kl_moss", 25, 10, 400, 2)) == pytest.approx(KL_MOSS_BUDGET_400_25, rel=1e-14)
    # log log t floored at zero below e
    assert float(budget_for("kl_ucb", 1, 2, 100, 2)) == pytest.approx(math.log(2), rel=1e-14)
    t = 100
    assert float(budget_for("kl_ucb", 4, t, 1000, 2)) == pytest.approx(
        (math.log(t) + math.log(math.log(t))) / 4, rel=1e-14)
    x = 50 / 2 / 3
    lp = math.log(x)
    assert float(budget_for("anytime_kl_ucb_switch", 3, 50, 1000, 2)) == pytest.approx(
        lp * (1 + lp * lp) / 3, rel=1e-14)
    with pytest.raises(ConfigurationError):
        budget_for("moss", 1, 1, 10, 2)


def test_switch_threshold():
    assert switch_threshold(16) == 1
    assert switch_threshold(32) == 2
    assert switch_threshold(31.999) == 1
    assert switch_threshold(3**5) == 3
    assert switch_threshold(10**10) == 100
    assert switch_threshold(0.5) == 0


def _ctx(t, T, pulls, means):
    return IndexContext.from_arrays(t, T, pulls, means)


def test_switch_branches():
    # T=32, K=2: threshold 1, so n=1 is KL-MOSS and n=2 is MOSS
    p = PolicySpec("kl_ucb_switch")
    c1 = _ctx(10, 32, [1, 9], [0.2, 0.0])
    expected_kl = kl_index(0.2, float(budget_for("kl_moss", 1, 10, 32, 2)), "gaussian")
    assert index_kl_switch(0, c1, policy=p) == expected_kl
    c2 = _ctx(10, 32, [2, 8], [0.2, 0.0])
    assert index_kl_switch(0, c2, policy=p) == index_moss(ArmState(2, 0.4), c2)


def test_anytime_switch_branches():
    # t/K = 50 -> threshold 2
    c = _ctx(100, 10**6, [2, 98], [0.1, 0.0])
    b = float(budget_for("anytime_kl_ucb_switch", 2, 100, 10**6, 2))
    assert index_kl_switch(0, c, anytime=True) == kl_index(0.1, b, "gaussian")
    c = _ctx(100, 10**6, [60, 40], [0.1, 0.0])
    assert index_kl_switch(0, c, anytime=True) == 0.1
    c = _ctx(100, 10**6, [3, 97], [0.1, 0.0])
    lp = math.log(100 / 2 / 3)
    assert index_kl_switch(0, c, anytime=True) == pytest.approx(0.1 + math.sqrt(lp * (1 + lp * lp) / 6), rel=1e-14)


def test_pinsker():
    assert pinsker_check("bernoulli", 1000, 2.0)
    assert not pinsker_check("bernoulli", 200, 10.0)
    assert pinsker_check("gaussian", 100, 0.5)


@settings(max_examples=300, deadline=None)
@given(mu=st.floats(-9.9, 9.9), b1=st.floats(0, 5), b2=st.floats(0, 5), s=st.floats(0.2, 3))
def test_gaussian_index_closed_form(mu, b1, b2, s):
    lo, hi = sorted((b1, b2))
    q1 = kl_index(mu, lo, "gaussian", sigma=s)
    q2 = kl_index(mu, hi, "gaussian", sigma=s)
    assert q1 <= q2
    assert q1 == pytest.approx(min(10.0, mu + math.sqrt(2 * s * s * lo)), abs=1e-8)


@settings(max_examples=300, deadline=None)
@given(mu=st.floats(0, 1), b=st.floats(1e-6, 3))
def test_bernoulli_index_invariant(mu, b):
    q = kl_index(mu, b, "bernoulli")
    assert mu <= q <= 1.0
    assume(q < 0.99)
    # the slope of KL(mu, .) is (q - mu)/(q(1 - q)), so a 1e-9 step in q moves
    # KL by at most ~1e-7 away from the boundary
    assert b - 1e-7 <= kl_div("bernoulli", mu, q) <= b


def test_grid_oracle_agreement_small():
    rng = np.random.default_rng(5)
    for _ in range(25):
        fam = rng.choice(["gaussian", "bernoulli"])
        if fam == "gaussian":
            mu, lo, hi = rng.uniform(-9, 9), -10.0, 10.0
        else:
            mu, lo, hi = rng.uniform(0, 1), 0.0, 1.0
        b = rng.uniform(0, 2)
        ref, step = oracles.kl_index_grid(fam, mu, b, lo, hi)
        fast, _ = oracles.kl_index_grid_fast(fam, [mu], [b], hi)
        assert fast[0] == ref
        assert abs(kl_index(mu, b, fam, MeanInterval(lo, hi)) - ref) <= 2 * step
