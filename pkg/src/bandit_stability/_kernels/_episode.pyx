# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled episode kernel.

Mirrors ``_formulas.py`` and ``_pyepisode.py`` operation for operation so
both backends return bit-identical results. Do not enable -ffast-math.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, pow, floor, fmin, INFINITY

cnp.import_array()

cdef enum:
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
    BERNOULLI = 1
    BISECT_MAX_ITER = 200

cdef double BISECT_TOL = 1e-9


cdef inline double log_plus(double x) nogil:
    if x <= 1.0:
        return 0.0
    return log(x)


cdef inline double kl_bernoulli(double p, double q) nogil:
    cdef double r
    if p == q:
        return 0.0
    if q <= 0.0 or q >= 1.0:
        return INFINITY
    r = 0.0
    if p > 0.0:
        r += p * log(p / q)
    if p < 1.0:
        r += (1.0 - p) * log((1.0 - p) / (1.0 - q))
    if r < 0.0:
        return 0.0
    return r


cdef inline double kl(int family, double p, double q, double sigma) nogil:
    cdef double d
    if family == BERNOULLI:
        return kl_bernoulli(p, q)
    d = p - q
    return d * d / (2.0 * sigma * sigma)


cdef double kl_upper(double mu, double budget, int family, double sigma,
                     double lo, double hi) nogil:
    cdef double a, b, m
    cdef int it
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
    for it in range(BISECT_MAX_ITER):
        if b - a <= BISECT_TOL:
            break
        m = 0.5 * (a + b)
        if kl(family, mu, m, sigma) <= budget:
            a = m
        else:
            b = m
    return a


cdef inline double bonus_moss(double n, double horizon, double K) nogil:
    cdef double v = log((horizon / K) / n)
    if v < 0.0:
        v = 0.0
    return sqrt(v / n)


cdef inline long fifth_root_floor(double x) nogil:
    cdef long m = <long>floor(pow(x, 0.2))
    while <double>((m + 1) * (m + 1) * (m + 1) * (m + 1) * (m + 1)) <= x:
        m += 1
    while m > 0 and <double>(m * m * m * m * m) > x:
        m -= 1
    return m


cdef double index_of(int code, int a, long t, long T, int K,
                     long *pulls, double *means, double *params) nogil:
    cdef double n = <double>pulls[a]
    cdef double mu = means[a]
    cdef double dT = <double>T
    cdef double dt = <double>t
    cdef double dK = <double>K
    cdef double h, v, y, ly, x, lp, f
    cdef int j, family
    cdef double sigma, lo, hi
    if code == UCB1:
        return mu + sqrt(2.0 * log(dT) / n)
    if code == MOSS:
        return mu + bonus_moss(n, dT, dK)
    if code == ANYTIME_MOSS:
        return mu + bonus_moss(n, dt, dK)
    if code == VANILLA_MOSS:
        return mu + sqrt(log(dT / n) / n)
    if code == OC_UCB:
        return mu + sqrt((2.0 * (1.0 + params[0]) / n) * log(dT / dt))
    if code == ADA_UCB:
        h = 0.0
        for j in range(K):
            h += fmin(n, sqrt(n * <double>pulls[j]))
        v = log(dT / h)
        if v < 0.0:
            v = 0.0
        return mu + sqrt((2.0 / n) * v)
    family = <int>params[1]
    sigma = params[2]
    lo = params[3]
    hi = params[4]
    if code == KL_UCB:
        v = log(dt)
        y = log(v) if v > 1.0 else 0.0
        return kl_upper(mu, (v + y) / n, family, sigma, lo, hi)
    if code == KL_MOSS:
        return kl_upper(mu, log_plus(dT / n) / n, family, sigma, lo, hi)
    if code == KL_UCB_PP:
        y = (dT / dK) / n
        ly = log_plus(y)
        return kl_upper(mu, log_plus(y * ly * ly + 1.0) / n, family, sigma, lo, hi)
    if code == KL_UCB_SWITCH:
        if pulls[a] <= fifth_root_floor(dT / dK):
            return kl_upper(mu, log_plus(dT / n) / n, family, sigma, lo, hi)
        return mu + bonus_moss(n, dT, dK)
    if code == ANYTIME_KL_UCB_SWITCH:
        x = (dt / dK) / n
        lp = log_plus(x)
        f = lp * (1.0 + lp * lp)
        if pulls[a] <= fifth_root_floor(dt / dK):
            return kl_upper(mu, f / n, family, sigma, lo, hi)
        return mu + sqrt(f / (2.0 * n))
    return mu


cdef inline bint depends_on_own_state_only(int code) nogil:
    return (code == UCB1 or code == MOSS or code == VANILLA_MOSS
            or code == KL_MOSS or code == KL_UCB_PP or code == KL_UCB_SWITCH)


cdef int run(int code, double *params, long T, int K, double *rewards,
             long stride, long *cps, long ncp, long *pulls, double *sums,
             double *sumsq, double *means, long *cp_out, double *cache,
             bint *fresh) nogil:
    """Returns -1 on success, otherwise the round at which an index was NaN."""
    cdef long t, ci = 0
    cdef int a, arm, best
    cdef double u, best_val, x
    cdef bint cacheable = depends_on_own_state_only(code)
    for t in range(T):
        while ci < ncp and cps[ci] == t:
            for a in range(K):
                cp_out[ci * K + a] = pulls[a]
            ci += 1
        if t < K:
            arm = <int>t
        elif code == ROUND_ROBIN:
            arm = <int>(t % K)
        elif code == ALWAYS_ARM:
            arm = <int>params[5]
        else:
            best = 0
            best_val = -INFINITY
            for a in range(K):
                if cacheable and fresh[a]:
                    u = cache[a]
                else:
                    u = index_of(code, a, t, T, K, pulls, means, params)
                    cache[a] = u
                    fresh[a] = True
                if u != u:
                    return <int>t
                if u > best_val:
                    best_val = u
                    best = a
            arm = best
        x = rewards[arm * stride + pulls[arm]]
        pulls[arm] += 1
        sums[arm] += x
        sumsq[arm] += x * x
        means[arm] = sums[arm] / pulls[arm]
        fresh[arm] = False
    while ci < ncp:
        for a in range(K):
            cp_out[ci * K + a] = pulls[a]
        ci += 1
    return -1


def simulate(int code, params, long T, int K, rewards, checkpoints):
    """Run one episode; see ``_pyepisode.simulate`` for the contract."""
    cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef double[:, ::1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef long[::1] c = np.ascontiguousarray(checkpoints, dtype=np.int64)
    cdef long ncp = c.shape[0]
    pulls_arr = np.zeros(K, dtype=np.int64)
    sums_arr = np.zeros(K, dtype=np.float64)
    sumsq_arr = np.zeros(K, dtype=np.float64)
    means_arr = np.zeros(K, dtype=np.float64)
    cp_arr = np.zeros((ncp, K), dtype=np.int64)
    cdef long[::1] pulls = pulls_arr
    cdef double[::1] sums = sums_arr
    cdef double[::1] sumsq = sumsq_arr
    cdef double[::1] means = means_arr
    cdef long[:, ::1] cp = cp_arr
    cdef double[::1] cache = np.zeros(K, dtype=np.float64)
    cdef cnp.uint8_t[::1] fresh = np.zeros(K, dtype=np.uint8)
    cdef long stride = r.shape[1]
    cdef long dummy_cp = 0
    cdef long *cp_ptr = &cp[0, 0] if ncp > 0 else &dummy_cp
    cdef long *c_ptr = &c[0] if ncp > 0 else &dummy_cp
    cdef int status
    if r.shape[0] < K:
        raise ValueError("reward table has fewer rows than arms")
    with nogil:
        status = run(code, &p[0], T, K, &r[0, 0], stride, c_ptr, ncp,
                     &pulls[0], &sums[0], &sumsq[0], &means[0], cp_ptr, &cache[0], <bint *>&fresh[0])
    if status >= 0:
        raise FloatingPointError(f"NaN index at round {status}")
    return pulls_arr, sums_arr, sumsq_arr, cp_arr
