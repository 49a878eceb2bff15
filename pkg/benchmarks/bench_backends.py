"""Time the compiled kernels against their pure-Python twins.

Usage: python benchmarks/bench_backends.py [--repeat N] [--scale S]

Both backends run on identical inputs; the script also checks that they
return the same answer before reporting timings.
"""
import argparse
import timeit

import numpy as np

from grafo import _pycore

try:
    from grafo import _core
except ImportError:  # pragma: no cover - extension not built
    _core = None


def tree_inputs(rng, n, P):
    X = rng.normal(size=(n, P))
    y = X[:, 0] - 0.5 * X[:, 1] + rng.normal(size=n)
    return X, y, np.zeros(P, np.int32)


def cases(scale, rng):
    n = int(200 * scale)
    X, y, lv = tree_inputs(rng, n, 10)
    n_trees = 20

    def build(core):
        return core.build_forest(X, y, 0, lv, n_trees, 3, 5, 1)

    forest = build(_core or _pycore)
    nodes, inbag = forest[:7], forest[7]

    def importance(core):
        return core.forest_importance(X, y, 0, lv, *nodes, inbag, 2)

    Xs = (X - X.mean(0)) / X.std(0)
    Xt = np.ascontiguousarray(Xs.T)
    z = y - y.mean()
    lam_max = np.max(np.abs(Xt @ z)) / n
    grid = lam_max * np.geomspace(1, 0.01, 50)

    def lasso(core):
        beta = np.zeros(10)
        for lam in grid:
            core.cd_wls(Xt, z, np.ones(n), beta, 0.0, lam, 1e-7, 100000, False)
        return beta

    t = (y > 0).astype(float)

    def logistic(core):
        beta = np.zeros(10)
        b0 = 0.0
        for lam in grid[:20]:
            b0, _ = core.logistic_irls(Xt, t, beta, b0, lam, 1e-7, 10000)
        return beta

    theta = np.array([[0.2, 1.0, 0.0, -1.0], [1.0, 0.0, 1.0, 0.0], [0.0, 1.0, -0.5, 1.0], [-1.0, 0.0, 1.0, 0.0]])
    u = rng.random((int(20000 * scale), 4))

    def gibbs(core):
        x = np.ones(4)
        out = np.empty((u.shape[0] // 10, 4))
        core.gibbs_sweeps(theta, x, u, 10, out)
        return out

    return {"tree build": build, "permutation importance": importance, "lasso path": lasso,
            "logistic path": logistic, "gibbs sweeps": gibbs}


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and np.allclose(a, b, atol=1e-6)
    return a == b


def run(repeat=3, scale=1.0, out=print):
    rng = np.random.default_rng(0)
    rows = []
    for label, fn in cases(scale, rng).items():
        py = min(timeit.repeat(lambda: fn(_pycore), number=1, repeat=repeat))
        if _core is None:
            rows.append((label, py, float("nan")))
            continue
        if not same(fn(_core), fn(_pycore)):
            raise AssertionError(f"{label}: backends disagree")
        cy = min(timeit.repeat(lambda: fn(_core), number=1, repeat=repeat))
        rows.append((label, py, cy))
    out(f"{'kernel':<24}{'python (s)':>12}{'cython (s)':>12}{'speed-up':>10}")
    for label, py, cy in rows:
        out(f"{label:<24}{py:>12.4f}{cy:>12.4f}{py / cy:>9.1f}x")
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="problem-size multiplier")
    args = ap.parse_args()
    run(args.repeat, args.scale)
