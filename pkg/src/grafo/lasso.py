"""LASSO regularization paths (linear and logistic) and StabLASSO edge ranks."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from .dataset import BinaryDataset, MixedDataset, dichotomize
from .ranking import RankedEdges, edge_index

log = logging.getLogger(__name__)

# path stops once the fit explains this share of the null deviance, or when
# one more penalty step adds less than FLAT_GAIN (relative) to that share
SATURATION = 0.999
FLAT_GAIN = 1e-5


class LassoError(ValueError):
    pass


@dataclass(frozen=True)
class LassoParams:
    n_lambda: int = 100
    lambda_min_ratio: float = 0.01
    tolerance: float = 1e-7
    max_iter: int = 100_000
    early_stop: bool = True

    def __post_init__(self):
        if self.n_lambda < 1 or self.max_iter < 1 or self.tolerance <= 0:
            raise LassoError("n_lambda, max_iter and tolerance must be positive")
        if not 0 < self.lambda_min_ratio < 1:
            raise LassoError("lambda_min_ratio must lie in (0, 1)")


@dataclass
class LassoPath:
    """Coefficients along a decreasing penalty grid.

    ``coefs`` are on the original predictor scale, ``std_coefs`` on the
    standardized one (the scale the penalty acts on).  ``entry_lambda[j]`` is
    the largest grid penalty with a nonzero coefficient for predictor j, or 0.
    """

    family: str
    lambdas: np.ndarray
    coefs: np.ndarray
    intercepts: np.ndarray
    std_coefs: np.ndarray
    entry_lambda: np.ndarray
    center: np.ndarray
    scale: np.ndarray

    @property
    def entry_index(self):
        """Grid index of each predictor's entry, -1 if it never enters."""
        nz = self.std_coefs != 0
        first = np.argmax(nz, axis=0)
        return np.where(nz.any(axis=0), first, -1)


def standardize(X):
    X = np.asarray(X, dtype=np.float64)
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    if np.any(scale <= 0):
        bad = np.flatnonzero(scale <= 0).tolist()
        raise LassoError(f"zero-variance predictor(s) {bad}; cannot standardize")
    return (X - center) / scale, center, scale


def _sigmoid(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def _logistic_loss(eta, t):
    # mean of log(1 + e^eta) - t * eta
    return float(np.mean(np.logaddexp(0.0, eta) - t * eta))


class _PathStop:
    """Tracks explained deviance along the path and says when to stop."""

    def __init__(self, enabled, null_dev):
        self.enabled = enabled and null_dev > 0
        self.null_dev = null_dev
        self.prev = 0.0
        self.steps = 0

    def __call__(self, dev):
        self.steps += 1
        if not self.enabled:
            return False
        ratio = 1.0 - dev / self.null_dev
        gain, self.prev = ratio - self.prev, ratio
        if ratio > SATURATION or (self.steps > 1 and gain < FLAT_GAIN * ratio):
            log.debug("path stopped after %d penalties (explained deviance %.4f)", self.steps, ratio)
            return True
        return False


def _path_standardized(Xs, y, family, params):
    """Path on an already standardized design; returns (lambdas, betas, b0s)."""
    n, P = Xs.shape
    Xt = np.ascontiguousarray(Xs.T)
    core = _backend.core
    tol, max_iter = params.tolerance, params.max_iter
    grid = np.geomspace(1.0, params.lambda_min_ratio, params.n_lambda) if params.n_lambda > 1 else np.ones(1)
    beta = np.zeros(P)
    betas, b0s = [], []
    if family == "linear":
        z = y - y.mean()
        lam_max = np.max(np.abs(Xt @ z)) / n
        lambdas = lam_max * grid
        w = np.ones(n)
        null_dev = float(z @ z)
        stop = _PathStop(params.early_stop, null_dev)
        for k, lam in enumerate(lambdas):
            _, sweeps = core.cd_wls(Xt, z, w, beta, 0.0, lam, tol, max_iter, False)
            if sweeps >= max_iter:
                warnings.warn(f"coordinate descent hit max_iter at lambda={lam:.3g}", RuntimeWarning, stacklevel=3)
            betas.append(beta.copy())
            b0s.append(float(y.mean()))
            resid = z - Xs @ beta
            if stop(float(resid @ resid)) and k + 1 < len(lambdas):
                lambdas = lambdas[:k + 1]
                break
        return lambdas, np.array(betas), np.array(b0s)

    t = (y + 1.0) / 2.0
    tbar = t.mean()
    lam_max = np.max(np.abs(Xt @ (y / 2.0))) / n
    lambdas = lam_max * grid
    b0 = float(np.log(tbar / (1.0 - tbar)))
    stop = _PathStop(params.early_stop, _logistic_loss(np.full(n, b0), t))
    for k, lam in enumerate(lambdas):
        b0, steps = core.logistic_irls(Xt, t, beta, b0, lam, tol, max_iter)
        if steps >= max_iter:
            warnings.warn(f"IRLS hit max_iter at lambda={lam:.3g}", RuntimeWarning, stacklevel=3)
        betas.append(beta.copy())
        b0s.append(b0)
        if stop(_logistic_loss(b0 + Xs @ beta, t)) and k + 1 < len(lambdas):
            lambdas = lambdas[:k + 1]
            break
    return lambdas, np.array(betas), np.array(b0s)


def _check_response(y, family):
    y = np.asarray(y, dtype=np.float64)
    if family == "logistic":
        if not np.all(np.abs(y) == 1.0):
            raise LassoError("logistic response must be coded -1/+1")
        if np.unique(y).size < 2:
            raise LassoError("logistic response has a single class")
    elif family != "linear":
        raise LassoError(f"unknown family {family!r}")
    return y


def lasso_path(X, y, family="linear", params=LassoParams()):
    """L1-penalized linear or logistic regression path.

    Predictors are standardized internally (mean 0, variance 1 with the 1/n
    convention); the intercept is never penalized.
    """
    y = _check_response(y, family)
    Xs, center, scale = standardize(X)
    lambdas, betas, b0s = _path_standardized(Xs, y, family, params)
    coefs = betas / scale
    intercepts = b0s - coefs @ center
    active = betas != 0
    entry = np.where(active.any(axis=0), lambdas[np.argmax(active, axis=0)], 0.0)
    return LassoPath(family, lambdas, coefs, intercepts, betas, entry, center, scale)


def kkt_residual(path, X, y):
    """Largest violation of the optimality conditions over the path.

    Measured on the standardized scale: active predictors need gradient equal
    to ``lambda * sign(beta)``, inactive ones ``|gradient| <= lambda``; for the
    logistic family the intercept gradient must vanish.
    """
    y = np.asarray(y, dtype=np.float64)
    Xs = (np.asarray(X, dtype=np.float64) - path.center) / path.scale
    n = Xs.shape[0]
    worst = 0.0
    for lam, beta, b0 in zip(path.lambdas, path.std_coefs, path.intercepts + path.coefs @ path.center):
        if path.family == "linear":
            resid = (y - y.mean()) - Xs @ beta
        else:
            resid = (y + 1.0) / 2.0 - _sigmoid(b0 + Xs @ beta)
            worst = max(worst, abs(resid.mean()))
        g = Xs.T @ resid / n
        act = beta != 0
        viol = np.where(act, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
        worst = max(worst, float(viol.max(initial=0.0)))
    return worst


def _as_lasso_matrix(data):
    """Numeric matrix and family for StabLASSO input."""
    if isinstance(data, BinaryDataset):
        return data.values, "logistic"
    if isinstance(data, MixedDataset):
        cat = data.is_categorical
        if not cat.any():
            return data.values, "linear"
        binary_labels = all(set(t.levels) in ({"-1", "1"}, {"-1", "+1"}) for t in data.types)
        if cat.all() and binary_labels:
            return dichotomize(data).values, "logistic"
        raise LassoError("StabLASSO needs all-continuous or -1/+1 data; "
                         "dichotomize mixed or multi-level categorical data first")
    X = np.asarray(data, dtype=np.float64)
    return X, ("logistic" if np.all(np.abs(X) == 1.0) else "linear")


def _average_rank_by_keys(keys):
    """Average ranks for rows of ``keys`` sorted lexicographically ascending."""
    m = keys.shape[0]
    order = np.lexsort(keys.T[::-1])
    ranks = np.empty(m)
    k = 0
    while k < m:
        e = k
        while e + 1 < m and np.array_equal(keys[order[e + 1]], keys[order[k]]):
            e += 1
        ranks[order[k:e + 1]] = (k + e) / 2.0 + 1.0
        k = e + 1
    return ranks


def stablasso_rank(data, params=LassoParams()):
    """Global edge ranks from per-variable LASSO paths.

    Edge i-j is scored by the smaller of the two entry penalties; larger is
    better.  Ties are broken by the absolute standardized coefficient one grid
    step below that penalty.  Edges never entering in either direction are
    unselectable.
    """
    X, family = _as_lasso_matrix(data)
    n, p = X.shape
    if p < 2:
        raise ValueError("need at least 2 variables")
    usable = X.std(axis=0) > 0
    if family == "logistic":
        usable &= np.array([np.unique(X[:, j]).size == 2 for j in range(p)])
    cols = np.flatnonzero(usable)
    entry = np.zeros((p, p))          # entry[j, i]: lambda of i in path of X_j
    tie = np.zeros((p, p))
    at_entry = np.zeros((p, p))
    if cols.size >= 2:
        Xs_all = (X[:, cols] - X[:, cols].mean(axis=0)) / X[:, cols].std(axis=0)
        for a, j in enumerate(cols):
            others = np.delete(np.arange(cols.size), a)
            y = X[:, j] if family == "logistic" else Xs_all[:, a]
            lambdas, betas, _ = _path_standardized(np.ascontiguousarray(Xs_all[:, others]), y, family, params)
            active = betas != 0
            first = np.where(active.any(axis=0), np.argmax(active, axis=0), -1)
            for col, i in enumerate(cols[others]):
                k = first[col]
                if k < 0:
                    continue
                entry[j, i] = lambdas[k]
                at_entry[j, i] = abs(betas[k, col])
                tie[j, i] = abs(betas[min(k + 1, len(lambdas) - 1), col])
    ranked = combine_entry_lambdas(entry, tie, at_entry)
    ranked.scores["family"] = family
    return ranked


def combine_entry_lambdas(entry, tie=None, at_entry=None):
    """Edge ranks from a matrix of entry penalties.

    ``entry[j, i]`` is the entry penalty of predictor i in the path of X_j.
    Edge i-j scores ``min(entry[j, i], entry[i, j])``; larger ranks better and
    0 means never selectable.  ``tie`` (same layout) breaks exact ties, larger
    first, taken from the direction that attains the minimum.  ``at_entry``
    supplies the alternative coefficient-based ordering kept for diagnostics.
    """
    entry = np.asarray(entry, dtype=np.float64)
    p = entry.shape[0]
    tie = np.zeros((p, p)) if tie is None else np.asarray(tie, dtype=np.float64)
    at_entry = np.zeros((p, p)) if at_entry is None else np.asarray(at_entry, dtype=np.float64)
    pairs = edge_index(p)
    a, b = pairs[:, 0], pairs[:, 1]
    lam_ab, lam_ba = entry[b, a], entry[a, b]       # a in path of b, b in path of a

    def binding(M):
        both = np.minimum(M[b, a], M[a, b])
        return np.where(lam_ab < lam_ba, M[b, a], np.where(lam_ab > lam_ba, M[a, b], both))

    lam = np.minimum(lam_ab, lam_ba)
    tie_key, coef_key = binding(tie), binding(at_entry)
    selectable = lam > 0
    rank = np.full(lam.shape, np.inf)
    alt = np.full(lam.shape, np.inf)
    if selectable.any():
        rank[selectable] = _average_rank_by_keys(np.column_stack([-lam[selectable], -tie_key[selectable]]))
        alt[selectable] = _average_rank_by_keys(np.column_stack([-coef_key[selectable]]))
    return RankedEdges(p, rank, selectable, scores={
        "lambda": lam, "tie_coef": tie_key, "coef_at_lambda": coef_key, "coef_rank": alt, "entry": entry})
