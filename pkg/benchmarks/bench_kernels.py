"""Timing comparison of the compiled and numpy likelihood kernels.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--m M] [--p P] [--repeat K]

The kernels dominate masked-panel fits, where every EM iteration and every
variance-profile probe reevaluates both component densities for all m
tissues.  Sizes default to the largest simulation design (m=50, p=30);
pass --m 5000 to see the regime where call overhead stops mattering.
"""

import argparse
import time

import numpy as np

from ebshrink import _kernels_py
from ebshrink.kernels import BACKEND

try:
    from ebshrink import _kernels_c
except ImportError:
    _kernels_c = None


def make_stats(rng, m, p):
    d = rng.uniform(0.2, 1.0, size=(m, p))
    w2 = rng.uniform(0.0, 4.0, size=(m, p))
    rss = rng.uniform(p, 4.0 * p, size=m)
    css = rss + rng.uniform(0.0, p, size=m)
    nobs = np.full(m, 4.0 * p)
    return d, w2, rss, css, nobs


def time_call(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m", type=int, default=50, help="tissue count")
    parser.add_argument("--p", type=int, default=30, help="covariate count")
    parser.add_argument("--repeat", type=int, default=200, help="timing repeats")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    d, w2, rss, css, nobs = make_stats(rng, args.m, args.p)
    t0 = np.full(args.m, 0.4)
    t1 = 1.0 - t0
    sigma2, eta = 1.3, 2.1

    _kernels_py.component_loglik(d, w2, rss, css, nobs, sigma2, eta)  # warmup
    print(f"active backend: {BACKEND}")
    print(f"stats: m={args.m}, p={args.p}, best of {args.repeat}\n")
    header = f"{'kernel':<26}{'numpy':>12}{'compiled':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))

    cases = [
        ("component_loglik", (d, w2, rss, css, nobs, sigma2, eta)),
        (
            "weighted_mixture_loglik",
            (d, w2, rss, css, nobs, t0, t1, sigma2, eta),
        ),
    ]
    for name, call_args in cases:
        t_py = time_call(getattr(_kernels_py, name), call_args, args.repeat)
        if _kernels_c is None:
            print(f"{name:<26}{t_py * 1e6:>10.1f}us{'n/a':>12}{'n/a':>10}")
            continue
        t_c = time_call(getattr(_kernels_c, name), call_args, args.repeat)
        got_py = getattr(_kernels_py, name)(*call_args)
        got_c = getattr(_kernels_c, name)(*call_args)
        np.testing.assert_allclose(got_c, got_py, rtol=1e-12)
        print(
            f"{name:<26}{t_py * 1e6:>10.1f}us{t_c * 1e6:>10.1f}us"
            f"{t_py / t_c:>9.1f}x"
        )
    if _kernels_c is None:
        print("\ncompiled extension not built; numpy fallback only")


if __name__ == "__main__":
    main()
