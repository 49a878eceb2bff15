import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grafo import _backend
from grafo.dataset import BinaryDataset, Categorical, Continuous, MixedDataset
from grafo.lasso import (LassoError, LassoParams, combine_entry_lambdas, kkt_residual, lasso_path,
                         stablasso_rank, standardize)

STEP = 0.01 ** (1 / 99)


def orthonormal_design(rng, n=60, P=4):
    # columns orthogonal to each other and to the intercept, X'X/n = I
    Q, _ = np.linalg.qr(np.column_stack([np.ones(n), rng.normal(size=(n, P))]))
    return Q[:, 1:] * np.sqrt(n)


def test_orthonormal_soft_threshold(rng):
    n = 60
    X = orthonormal_design(rng, n)
    y = X @ np.array([1.5, -0.8, 0.3, 0.0]) + 0.2 * rng.normal(size=n)
    path = lasso_path(X, y, params=LassoParams(early_stop=False))
    np.testing.assert_allclose(path.scale, 1.0, atol=1e-12)
    ols = X.T @ (y - y.mean()) / n
    for lam, beta in zip(path.lambdas, path.std_coefs):
        expect = np.sign(ols) * np.maximum(np.abs(ols) - lam, 0.0)
        np.testing.assert_allclose(beta, expect, atol=1e-6)
    for j in range(4):
        e = path.entry_lambda[j]
        if abs(ols[j]) > path.lambdas[-1]:
            assert e <= abs(ols[j]) < e / STEP + 1e-12


def test_first_grid_point_is_all_zero(rng):
    X = rng.normal(size=(40, 6))
    for family, y in (("linear", rng.normal(size=40)), ("logistic", np.where(rng.random(40) < 0.5, -1.0, 1.0))):
        path = lasso_path(X, y, family)
        np.testing.assert_array_equal(path.std_coefs[0], 0.0)
        assert np.all(np.diff(path.lambdas) < 0) and np.all(path.lambdas > 0)
        assert np.any(path.std_coefs[1:] != 0)


def test_lambda_max_formula(rng):
    X = rng.normal(size=(30, 5))
    y = rng.normal(size=30)
    Xs, _, _ = standardize(X)
    path = lasso_path(X, y)
    assert path.lambdas[0] == pytest.approx(np.max(np.abs(Xs.T @ (y - y.mean()))) / 30, rel=1e-12)
    s = np.where(y > 0, 1.0, -1.0)
    path = lasso_path(X, s, "logistic")
    assert path.lambdas[0] == pytest.approx(np.max(np.abs(Xs.T @ (s / 2))) / 30, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_kkt_oracle_linear(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 10))
    y = X[:, :3] @ [1.0, -0.5, 0.25] + rng.normal(size=50)
    params = LassoParams()
    path = lasso_path(X, y, params=params)
    assert kkt_residual(path, X, y) <= 10 * params.tolerance


@pytest.mark.parametrize("seed", range(5))
def test_kkt_oracle_logistic(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 10))
    y = np.where(rng.random(50) < 1 / (1 + np.exp(-(X[:, 0] - X[:, 1]))), 1.0, -1.0)
    params = LassoParams()
    path = lasso_path(X, y, "logistic", params)
    assert kkt_residual(path, X, y) <= 10 * params.tolerance


@pytest.mark.parametrize("family", ["linear", "logistic"])
def test_warm_start_matches_cold_start(rng, family):
    X = rng.normal(size=(50, 8))
    eta = X[:, 0] - 0.5 * X[:, 2]
    y = eta + rng.normal(size=50) if family == "linear" else np.where(rng.random(50) < 1 / (1 + np.exp(-eta)), 1., -1.)
    params = LassoParams(early_stop=False)
    path = lasso_path(X, y, family, params)
    Xs, _, _ = standardize(X)
    Xt = np.ascontiguousarray(Xs.T)
    for k in (5, 40, 90):
        lam = path.lambdas[k]
        beta = np.zeros(8)
        if family == "linear":
            _backend.core.cd_wls(Xt, y - y.mean(), np.ones(50), beta, 0.0, lam, params.tolerance, params.max_iter, False)
        else:
            t = (y + 1) / 2
            _backend.core.logistic_irls(Xt, t, beta, float(np.log(t.mean() / (1 - t.mean()))), lam,
                                        params.tolerance, params.max_iter)
        np.testing.assert_allclose(path.std_coefs[k], beta, atol=10 * params.tolerance)


def test_objective_non_increasing_over_sweeps(rng):
    n, P = 50, 8
    Xs, _, _ = standardize(rng.normal(size=(n, P)))
    z = Xs[:, 0] - Xs[:, 3] + rng.normal(size=n)
    z -= z.mean()
    Xt = np.ascontiguousarray(Xs.T)
    lam = 0.05
    beta = np.zeros(P)

    def objective(b):
        r = z - Xs @ b
        return 0.5 * r @ r / n + lam * np.abs(b).sum()

    prev = objective(beta)
    for _ in range(20):
        _backend.core.cd_wls(Xt, z, np.ones(n), beta, 0.0, lam, 1e-12, 1, False)
        cur = objective(beta)
        assert cur <= prev + 1e-15
        prev = cur


def test_column_permutation_invariance(rng):
    X = rng.normal(size=(50, 6))
    y = X[:, 1] - X[:, 4] + rng.normal(size=50)
    perm = rng.permutation(6)
    a = lasso_path(X, y, params=LassoParams(early_stop=False))
    b = lasso_path(X[:, perm], y, params=LassoParams(early_stop=False))
    np.testing.assert_allclose(a.coefs[:, perm], b.coefs, atol=1e-6)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_entry_lambda_monotone_consistency(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 5))
    y = X[:, 0] + rng.normal(size=30)
    path = lasso_path(X, y)
    for j in range(5):
        assert path.entry_lambda[j] == 0 or path.entry_lambda[j] in path.lambdas
        above = path.lambdas > path.entry_lambda[j]
        assert np.all(path.std_coefs[above, j] == 0)


def test_coefficients_back_transform(rng):
    X = rng.normal(size=(40, 3)) * [1, 10, 0.1] + [5, -2, 0]
    y = X @ [1.0, 0.1, 10.0] + rng.normal(size=40)
    path = lasso_path(X, y)
    fit = path.intercepts[-1] + X @ path.coefs[-1]
    Xs = (X - path.center) / path.scale
    np.testing.assert_allclose(fit, y.mean() + Xs @ path.std_coefs[-1], atol=1e-9)


def test_errors(rng):
    X = rng.normal(size=(20, 3))
    with pytest.raises(LassoError, match="single class"):
        lasso_path(X, np.ones(20), "logistic")
    with pytest.raises(LassoError, match="-1/\\+1"):
        lasso_path(X, np.arange(20.0), "logistic")
    X[:, 1] = 2.0
    with pytest.raises(LassoError, match="zero-variance"):
        lasso_path(X, rng.normal(size=20))
    with pytest.raises(LassoError):
        LassoParams(lambda_min_ratio=1.0)


def test_min_rule_example():
    # X1 in path of X2 enters at 0.4, X2 in path of X1 at 0.6
    entry = np.array([[0, 0.6], [0.4, 0]])
    ranked = combine_entry_lambdas(entry)
    assert ranked.scores["lambda"][0] == pytest.approx(0.4)
    assert ranked.rank[0] == 1


def test_never_active_edge_unrankable():
    ranked = combine_entry_lambdas(np.zeros((2, 2)))
    assert not ranked.selectable[0] and np.isinf(ranked.rank[0])


def test_three_variable_ordering():
    entry = np.array([[0, 0.5, 0.2],
                      [0.6, 0, 0.0],
                      [0.3, 0.1, 0]])
    ranked = combine_entry_lambdas(entry)
    np.testing.assert_array_equal(ranked.rank, [1, 2, np.inf])
    assert ranked.selectable.tolist() == [True, True, False]


def test_tie_broken_by_binding_direction_coefficient():
    entry = np.array([[0, 0.5, 0.5], [0.5, 0, 0], [0.5, 0, 0]])
    tie = np.array([[0, 0.1, 0.3], [0.9, 0, 0], [0.2, 0, 0]])
    ranked = combine_entry_lambdas(entry, tie)
    # equal lambdas in both directions: the smaller coefficient of the pair decides
    np.testing.assert_array_equal(ranked.rank[:2], [2, 1])


def test_stablasso_recovers_chain(rng):
    n = 200
    x0 = rng.normal(size=n)
    x1 = x0 + 0.5 * rng.normal(size=n)
    x2 = x1 + 0.5 * rng.normal(size=n)
    data = MixedDataset(["a", "b", "c"], [Continuous()] * 3, np.column_stack([x0, x1, x2]))
    ranked = stablasso_rank(data)
    assert ranked.scores["family"] == "linear"
    assert sorted(ranked.rank[[0, 2]]) == [1, 2]  # a-b and b-c beat a-c
    assert set(ranked.scores) >= {"lambda", "tie_coef", "coef_at_lambda", "coef_rank"}


def test_stablasso_binary_and_mixed_inputs(rng):
    vals = np.where(rng.random((60, 3)) < 0.5, -1.0, 1.0)
    vals[:, 1] = vals[:, 0] * np.where(rng.random(60) < 0.9, 1, -1)
    assert stablasso_rank(BinaryDataset(["a", "b", "c"], vals)).scores["family"] == "logistic"
    mixed = MixedDataset(["a", "b"], [Continuous(), Categorical("xyz")],
                         np.column_stack([rng.normal(size=30), rng.integers(0, 3, 30)]))
    with pytest.raises(LassoError, match="dichotomize"):
        stablasso_rank(mixed)


def test_stablasso_constant_column_unrankable(rng):
    vals = np.column_stack([rng.normal(size=40), rng.normal(size=40), np.ones(40)])
    ranked = stablasso_rank(MixedDataset(["a", "b", "c"], [Continuous()] * 3, vals))
    assert ranked.selectable.tolist()[1:] == [False, False]
