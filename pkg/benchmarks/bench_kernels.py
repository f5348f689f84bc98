"""Time the compiled episode kernel against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py --T 10000 --episodes 5
"""

import argparse
import time

import numpy as np

from bandit_stability import _kernels
from bandit_stability.env import RewardModel, derive_stream, reward_table
from bandit_stability.policies import PolicySpec

DEFAULT_POLICIES = ("ucb1", "moss", "oc_ucb", "ada_ucb", "kl_moss", "kl_ucb_pp", "anytime_kl_ucb_switch")


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=10_000)
    ap.add_argument("--K", type=int, default=2)
    ap.add_argument("--episodes", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--policies", nargs="+", default=list(DEFAULT_POLICIES))
    args = ap.parse_args(argv)

    arms = [RewardModel.gaussian()] * args.K
    tables = [reward_table(arms, args.T, derive_stream(0, r, 0)) for r in range(args.episodes)]
    if _kernels.compiled_simulate is None:
        print("compiled kernel unavailable; timing the Python kernel only")
    print(f"{'policy':24s} {'python ms/ep':>13s} {'compiled ms/ep':>15s} {'speedup':>8s}")
    for name in args.policies:
        code, params = PolicySpec(name).kernel_args()

        def run(kernel):
            return [kernel(code, params, args.T, args.K, t, []) for t in tables]

        py = best_of(lambda: run(_kernels.python_simulate), args.repeat) / args.episodes * 1e3
        if _kernels.compiled_simulate is None:
            print(f"{name:24s} {py:13.2f} {'-':>15s} {'-':>8s}")
            continue
        a = run(_kernels.python_simulate)
        b = run(_kernels.compiled_simulate)
        assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))
        cy = best_of(lambda: run(_kernels.compiled_simulate), args.repeat) / args.episodes * 1e3
        print(f"{name:24s} {py:13.2f} {cy:15.3f} {py / cy:7.0f}x")


if __name__ == "__main__":
    main()
