"""Time the compiled tree kernel against the pure-Python fallback.

Both kernels grow the same trees; the script checks that before timing.

    python3 benchmarks/bench_tree_kernel.py --rows 2000 --features 64 --repeats 3
"""

import argparse
import time

import numpy as np

from enginectx.learn import backend
from enginectx.learn._kernel_py import GINI, MSE
from enginectx.learn.tree import Binner, grow


def problem(rows, features, classes, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((rows, features))
    score = X[:, 0] + 0.5 * X[:, 1] * X[:, 2] + 0.3 * rng.standard_normal(rows)
    y = np.digitize(score, np.quantile(score, np.linspace(0, 1, classes + 1)[1:-1]))
    return X, y


def run(name, Xb, binner, Y, cnt, criterion, args):
    with backend.use_backend(name):
        best = np.inf
        for r in range(args.repeats):
            t0 = time.perf_counter()
            out = grow(Xb, binner, Y, cnt, criterion, args.depth, 1, args.max_features,
                       False, r)
            best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--features", type=int, default=64)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--depth", type=int, default=-1, help="-1 grows until pure")
    ap.add_argument("--max-features", dest="max_features", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    X, y = problem(args.rows, args.features, args.classes, args.seed)
    binner = Binner.fit(X)
    Xb = binner.transform(X)
    cnt = np.ones(args.rows)
    resid = (y == 0) - np.mean(y == 0)
    cases = {"gini": (GINI, np.eye(args.classes)[y]),
             "mse": (MSE, np.column_stack([resid, np.ones(args.rows)]))}

    print(f"rows={args.rows} features={args.features} max_features={args.max_features} "
          f"backends={backend.available_backends()}")
    if "compiled" not in backend.available_backends():
        print("compiled kernel not built; only the fallback is available")
    for label, (criterion, Y) in cases.items():
        t_py, a = run("python", Xb, binner, Y, cnt, criterion, args)
        line = f"{label:<5} python {t_py * 1e3:9.1f} ms"
        if "compiled" in backend.available_backends():
            t_c, b = run("compiled", Xb, binner, Y, cnt, criterion, args)
            same = all(np.array_equal(a[k], b[k]) for k in ("feature", "threshold_bin", "stats"))
            line += f"   compiled {t_c * 1e3:8.2f} ms   speedup {t_py / t_c:6.1f}x   identical={same}"
        print(f"{line}   nodes={a['feature'].size}")


if __name__ == "__main__":
    main()
