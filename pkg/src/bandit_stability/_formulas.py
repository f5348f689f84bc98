"""Scalar index formulas shared by the public API and the pure-Python kernel.

Every function here has a line-for-line twin in ``_kernels/_episode.pyx``.
Keep the operation order identical in both files: the test-suite checks
that the two backends produce bit-identical episodes.
"""

import math

INF = math.inf

# policy codes understood by both episode kernels
UCB1 = 0
MOSS = 1
ANYTIME_MOSS = 2
VANILLA_MOSS = 3
OC_UCB = 4
ADA_UCB = 5
KL_UCB = 6
KL_MOSS = 7
KL_UCB_PP = 8
KL_UCB_SWITCH = 9
ANYTIME_KL_UCB_SWITCH = 10
ROUND_ROBIN = 11
ALWAYS_ARM = 12

GAUSSIAN = 0
BERNOULLI = 1

# slots of the float parameter vector passed to the kernels
P_EPSILON = 0
P_FAMILY = 1
P_SIGMA = 2
P_LO = 3
P_HI = 4
P_ARM = 5
N_PARAMS = 6

BISECT_TOL = 1e-9
BISECT_MAX_ITER = 200


def log_plus(x):
    if x <= 1.0:
        return 0.0
    return math.log(x)


def bonus_ucb1(n, T):
    return math.sqrt(2.0 * math.log(T) / n)


def bonus_moss(n, horizon, K):
    return math.sqrt(max(0.0, math.log((horizon / K) / n)) / n)


def bonus_vanilla_moss(n, T):
    return math.sqrt(math.log(T / n) / n)


def bonus_oc_ucb(n, t, T, eps):
    return math.sqrt((2.0 * (1.0 + eps) / n) * math.log(T / t))


def ada_h(a, pulls):
    na = pulls[a]
    h = 0.0
    for nj in pulls:
        h += min(na, math.sqrt(na * nj))
    return h


def bonus_ada_ucb(n, h, T):
    return math.sqrt((2.0 / n) * max(0.0, math.log(T / h)))


def kl_bernoulli(p, q):
    if p == q:
        return 0.0
    if q <= 0.0 or q >= 1.0:
        return INF
    r = 0.0
    if p > 0.0:
        r += p * math.log(p / q)
    if p < 1.0:
        r += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(0.0, r)


def kl_gaussian(p, q, sigma):
    d = p - q
    return d * d / (2.0 * sigma * sigma)


def kl(family, p, q, sigma):
    if family == BERNOULLI:
        return kl_bernoulli(p, q)
    return kl_gaussian(p, q, sigma)


def kl_upper(mu, budget, family, sigma, lo, hi):
    """Largest q in [mu, hi] with KL(mu, q) <= budget, by bisection."""
    if mu < lo:
        mu = lo
    if mu > hi:
        mu = hi
    if not budget > 0.0:
        return mu
    if kl(family, mu, hi, sigma) <= budget:
        return hi
    a = mu
    b = hi
    for _ in range(BISECT_MAX_ITER):
        if b - a <= BISECT_TOL:
            break
        m = 0.5 * (a + b)
        if kl(family, mu, m, sigma) <= budget:
            a = m
        else:
            b = m
    return a


def budget_kl_ucb(n, t):
    lt = math.log(t)
    ll = math.log(lt) if lt > 1.0 else 0.0
    return (lt + ll) / n


def budget_kl_moss(n, T):
    return log_plus(T / n) / n


def budget_kl_ucb_pp(n, T, K):
    y = (T / K) / n
    ly = log_plus(y)
    return log_plus(y * ly * ly + 1.0) / n


def phi(x):
    lp = log_plus(x)
    return lp * (1.0 + lp * lp)


def fifth_root_floor(x):
    """Largest integer m >= 0 with m**5 <= x."""
    m = int(math.floor(math.pow(x, 0.2)))
    while (m + 1) ** 5 <= x:
        m += 1
    while m > 0 and m ** 5 > x:
        m -= 1
    return m


def index_of(code, a, t, T, K, pulls, means, params):
    """Index of arm ``a`` after ``t`` completed rounds (all pulls >= 1)."""
    n = pulls[a]
    mu = means[a]
    if code == UCB1:
        return mu + bonus_ucb1(n, T)
    if code == MOSS:
        return mu + bonus_moss(n, T, K)
    if code == ANYTIME_MOSS:
        return mu + bonus_moss(n, t, K)
    if code == VANILLA_MOSS:
        return mu + bonus_vanilla_moss(n, T)
    if code == OC_UCB:
        return mu + bonus_oc_ucb(n, t, T, params[P_EPSILON])
    if code == ADA_UCB:
        return mu + bonus_ada_ucb(n, ada_h(a, pulls), T)
    family = int(params[P_FAMILY])
    sigma = params[P_SIGMA]
    lo = params[P_LO]
    hi = params[P_HI]
    if code == KL_UCB:
        return kl_upper(mu, budget_kl_ucb(n, t), family, sigma, lo, hi)
    if code == KL_MOSS:
        return kl_upper(mu, budget_kl_moss(n, T), family, sigma, lo, hi)
    if code == KL_UCB_PP:
        return kl_upper(mu, budget_kl_ucb_pp(n, T, K), family, sigma, lo, hi)
    if code == KL_UCB_SWITCH:
        if n <= fifth_root_floor(T / K):
            return kl_upper(mu, budget_kl_moss(n, T), family, sigma, lo, hi)
        return mu + bonus_moss(n, T, K)
    if code == ANYTIME_KL_UCB_SWITCH:
        f = phi((t / K) / n)
        if n <= fifth_root_floor(t / K):
            return kl_upper(mu, f / n, family, sigma, lo, hi)
        return mu + math.sqrt(f / (2.0 * n))
    raise ValueError(f"policy code {code} has no index")
