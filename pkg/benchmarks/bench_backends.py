"""Compare the compiled and numpy kernel backends on the hot paths.

Usage: python3 benchmarks/bench_backends.py [--sizes 500 2000 8000] [--repeat 3]

Both backends are imported directly, so no environment variable is needed.
Reported times are the best of ``--repeat`` runs; the last column checks that
the two backends agree.
"""

import argparse
import time

import numpy as np

from kequiv import _pykernels

try:
    from kequiv import _core
except ImportError:  # extension not built
    _core = None

IMQ, RBF = 1, 0


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, d, rng):
    X = rng.standard_normal((n, d))
    S = -X
    V = rng.standard_normal((n, 1))
    W = rng.standard_normal((n, 32))
    return [
        ("stein_gram", lambda mod: mod.stein_gram(X, S, IMQ, 1.0, 1.0, -0.5)),
        ("stein_matmat r=1", lambda mod: mod.stein_matmat(X, S, V, IMQ, 1.0, 1.0, -0.5)),
        ("stein_matmat r=32", lambda mod: mod.stein_matmat(X, S, W, IMQ, 1.0, 1.0, -0.5)),
        ("gram rbf", lambda mod: mod.gram(X, X, RBF, 1.0, 1.0, -0.5)),
        ("gram_matmat sym r=1", lambda mod: mod.gram_matmat(X, X, V, RBF, 1.0, 1.0, -0.5, True)),
        ("row_col_sums", lambda mod: np.concatenate(mod.gram_row_col_sums(X, X, RBF, 1.0, 1.0, -0.5))),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 4000])
    parser.add_argument("--dim", type=int, default=1)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if _core is None:
        print("compiled extension not available; only the numpy backend would run")
        return
    rng = np.random.default_rng(0)
    print(f"{'case':<22}{'n':>7}{'python s':>11}{'compiled s':>12}{'speedup':>9}{'max rel diff':>14}")
    for n in args.sizes:
        for name, fn in cases(n, args.dim, rng):
            tp, a = best_of(lambda: fn(_pykernels), args.repeat)
            tc, b = best_of(lambda: fn(_core), args.repeat)
            rel = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
            print(f"{name:<22}{n:>7}{tp:>11.4f}{tc:>12.4f}{tp / tc:>9.1f}{rel:>14.2e}")


if __name__ == "__main__":
    main()
