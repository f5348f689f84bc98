"""Pure-Python episode kernel.

Fallback for ``_episode.pyx``; identical inputs give bit-identical outputs.
"""

import math

import numpy as np

from .. import _formulas as F


# indices that only move when their own arm is pulled
_CACHEABLE = frozenset(
    {F.UCB1, F.MOSS, F.VANILLA_MOSS, F.KL_MOSS, F.KL_UCB_PP, F.KL_UCB_SWITCH}
)


def _select(code, t, T, K, pulls, means, params, indices, cache=None):
    if code == F.ROUND_ROBIN:
        return t % K
    if code == F.ALWAYS_ARM:
        return int(params[F.P_ARM])
    best = 0
    best_val = -math.inf
    for a in range(K):
        if cache is not None and cache[a] is not None:
            u = cache[a]
        else:
            u = F.index_of(code, a, t, T, K, pulls, means, params)
            if cache is not None:
                cache[a] = u
        if u != u:
            raise FloatingPointError(f"NaN index for arm {a} at round {t}")
        if indices is not None:
            indices[a] = u
        if u > best_val:
            best_val = u
            best = a
    return best


def simulate(code, params, T, K, rewards, checkpoints):
    """Run one episode.

    ``rewards[a][j]`` is the reward dispensed on the (j+1)-th pull of arm a.
    Returns ``(pulls, sums, sumsq, checkpoint_pulls)`` as numpy arrays.
    """
    params = [float(p) for p in params]
    table = [list(map(float, rewards[a])) for a in range(K)]
    cps = [int(c) for c in checkpoints]
    cp_out = np.zeros((len(cps), K), dtype=np.int64)
    pulls = [0] * K
    sums = [0.0] * K
    sumsq = [0.0] * K
    means = [0.0] * K
    cache = [None] * K if code in _CACHEABLE else None
    ci = 0
    for t in range(T):
        while ci < len(cps) and cps[ci] == t:
            cp_out[ci] = pulls
            ci += 1
        if t < K:
            arm = t
        else:
            arm = _select(code, t, T, K, pulls, means, params, None, cache)
        x = table[arm][pulls[arm]]
        pulls[arm] += 1
        sums[arm] += x
        sumsq[arm] += x * x
        means[arm] = sums[arm] / pulls[arm]
        if cache is not None:
            cache[arm] = None
    while ci < len(cps):
        cp_out[ci] = pulls
        ci += 1
    return (
        np.array(pulls, dtype=np.int64),
        np.array(sums, dtype=np.float64),
        np.array(sumsq, dtype=np.float64),
        cp_out,
    )


def trace(code, params, T, K, rewards):
    """Like :func:`simulate` but records the arm played and the index vector
    that chose it at every round (NaN rows during initialization)."""
    params = [float(p) for p in params]
    table = [list(map(float, rewards[a])) for a in range(K)]
    arms = np.zeros(T, dtype=np.int64)
    index_log = np.full((T, K), np.nan)
    pulls = [0] * K
    sums = [0.0] * K
    means = [0.0] * K
    row = [0.0] * K
    for t in range(T):
        if t < K:
            arm = t
        else:
            arm = _select(code, t, T, K, pulls, means, params, row)
            if code not in (F.ROUND_ROBIN, F.ALWAYS_ARM):
                index_log[t] = row
        arms[t] = arm
        x = table[arm][pulls[arm]]
        pulls[arm] += 1
        sums[arm] += x
        means[arm] = sums[arm] / pulls[arm]
    return arms, index_log
