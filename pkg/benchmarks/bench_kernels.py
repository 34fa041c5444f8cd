"""Time the compiled split/routing kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --n 20000 --d 14 --repeat 3
"""
import argparse
import time

import numpy as np

from deltatab import kernels
from deltatab.cart import TreeParams, fit_cart
from deltatab.data import from_arrays


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + X[:, 1] ** 2 + 0.3 * rng.normal(size=n) > 1).astype(np.int64)
    Y = rng.normal(size=(n, 2))
    feats = np.arange(d, dtype=np.int64)
    tree = fit_cart(from_arrays(X, y), TreeParams(max_depth=12, min_leaf=2, max_leaf_nodes=512), backend="compiled" if kernels.compiled_available() else "python")
    return {
        "split/classification": lambda b: kernels.best_splits_classification(X, y, 2, feats, 1, backend=b),
        "split/regression": lambda b: kernels.best_splits_regression(X, Y, feats, 1, backend=b),
        "apply_tree": lambda b: kernels.apply_tree(X, tree.feature, tree.threshold, tree.left, tree.right, backend=b),
        "fit_cart": lambda b: fit_cart(from_arrays(X, y), TreeParams(max_depth=8, max_leaf_nodes=64), backend=b).feature,
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--d", type=int, default=14)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    if not kernels.compiled_available():
        print("compiled extension not built; timing the Python fallback only")
    backends = ["compiled", "python"] if kernels.compiled_available() else ["python"]
    print(f"n={args.n} d={args.d} best of {args.repeat}")
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup  same" if len(backends) == 2 else ""))
    for name, fn in cases(args.n, args.d, args.seed).items():
        results = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        line = f"{name:<22}" + "".join(f"{results[b][0]:>11.4f}s" for b in backends)
        if len(backends) == 2:
            a, b = (results[k][1] for k in backends)
            same = all(np.array_equal(u, v) for u, v in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
            line += f"  {results['python'][0] / results['compiled'][0]:>9.1f}x  {same}"
        print(line)


if __name__ == "__main__":
    main()
