"""Random forests with out-of-bag permutation importance, and GRaFo edge ranks."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._rng import FOREST, IMPORTANCE, derive_seed
from .dataset import MixedDataset
from .ranking import RankedEdges, average_ranks, edge_index

log = logging.getLogger(__name__)

MAX_CATEGORICAL_LEVELS = 10


class ForestParamError(ValueError):
    pass


class ConstantResponseWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int | str = "default"
    min_node_size: int | None = None
    seed: int = 0

    def resolve_mtry(self, n_predictors, classification):
        if self.mtry == "default":
            if classification:
                return max(1, int(math.isqrt(n_predictors)))
            return max(1, n_predictors // 3)
        mtry = int(self.mtry)
        if mtry < 1 or mtry > n_predictors:
            raise ForestParamError(f"mtry={mtry} must lie in [1, {n_predictors}]")
        return mtry

    def resolve_min_node_size(self, classification):
        if self.min_node_size is None:
            return 1 if classification else 5
        if int(self.min_node_size) < 1:
            raise ForestParamError("min_node_size must be >= 1")
        return int(self.min_node_size)


@dataclass
class ForestModel:
    """Flat node arrays; tree ``t`` owns ``offsets[t]:offsets[t+1]``."""

    feature: np.ndarray
    threshold: np.ndarray
    catmask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    inbag: np.ndarray
    n_levels: np.ndarray
    n_classes: int
    constant_response: bool = False

    @property
    def response_kind(self):
        return "classification" if self.n_classes > 0 else "regression"

    @property
    def n_trees(self):
        return len(self.offsets) - 1

    @property
    def n_predictors(self):
        return len(self.n_levels)

    def _nodes(self):
        return (self.feature, self.threshold, self.catmask, self.left,
                self.right, self.value, self.offsets)

    def oob_indices(self, t):
        return np.flatnonzero(self.inbag[t] == 0)

    def tree_size(self, t):
        return int(self.offsets[t + 1] - self.offsets[t])

    def used_predictors(self, t=None):
        trees = range(self.n_trees) if t is None else [t]
        used = set()
        for k in trees:
            sl = slice(self.offsets[k], self.offsets[k + 1])
            used.update(self.feature[sl][self.left[sl] >= 0].tolist())
        return sorted(used)

    def predict_trees(self, X):
        """Per-tree predictions, shape (n_rows, n_trees)."""
        return _backend.core.apply_forest(_as_matrix(X), self.n_levels, *self._nodes())

    def predict(self, X):
        per_tree = self.predict_trees(X)
        if self.n_classes == 0:
            return per_tree.mean(axis=1)
        votes = np.zeros((per_tree.shape[0], self.n_classes), dtype=np.int64)
        for c in range(self.n_classes):
            votes[:, c] = (per_tree == c).sum(axis=1)
        return votes.argmax(axis=1).astype(np.float64)

    def oob_predict(self, X):
        """Prediction for each training row from the trees that left it out.

        Rows that are in-bag for every tree get NaN.
        """
        per_tree = self.predict_trees(X)
        oob = self.inbag.T == 0
        counts = oob.sum(axis=1)
        out = np.full(per_tree.shape[0], np.nan)
        has = counts > 0
        if self.n_classes == 0:
            out[has] = np.where(oob, per_tree, 0.0).sum(axis=1)[has] / counts[has]
            return out
        votes = np.stack([((per_tree == c) & oob).sum(axis=1) for c in range(self.n_classes)], axis=1)
        out[has] = votes.argmax(axis=1)[has]
        return out

    def dump_tree(self, t, names=None):
        """Indented text rendering of one tree (debugging aid)."""
        o = int(self.offsets[t])
        lines = []

        def name(f):
            return names[f] if names is not None else f"x{f}"

        def rec(node, depth):
            pad = "  " * depth
            k = o + node
            if self.left[k] < 0:
                lines.append(f"{pad}leaf {self.value[k]:.6g}")
                return
            f = int(self.feature[k])
            if self.n_levels[f] == 0:
                cond = f"{name(f)} <= {self.threshold[k]:.6g}"
            else:
                lv = [b for b in range(int(self.n_levels[f])) if (int(self.catmask[k]) >> b) & 1]
                cond = f"{name(f)} in {lv}"
            lines.append(f"{pad}if {cond}:")
            rec(int(self.left[k]), depth + 1)
            lines.append(f"{pad}else:")
            rec(int(self.right[k]), depth + 1)

        rec(0, 0)
        return "\n".join(lines)


def _as_matrix(X):
    if isinstance(X, MixedDataset):
        X = X.values
    return np.ascontiguousarray(X, dtype=np.float64)


def fit_forest(X, y, params, *, n_levels=None, n_classes=0):
    """Bagged CART forest of ``y`` on ``X``.

    ``X`` is a MixedDataset of predictors or a plain matrix with per-column
    ``n_levels`` (0 = continuous).  ``n_classes > 0`` selects classification,
    with ``y`` holding class indices.
    """
    if isinstance(X, MixedDataset):
        n_levels = X.n_levels
    Xm = _as_matrix(X)
    n, P = Xm.shape
    if P < 1:
        raise ForestParamError("need at least one predictor")
    n_levels = np.zeros(P, np.int32) if n_levels is None else np.ascontiguousarray(n_levels, dtype=np.int32)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ForestParamError("y must have one entry per row of X")
    classification = n_classes > 0
    mtry = params.resolve_mtry(P, classification)
    min_node = params.resolve_min_node_size(classification)
    if n < 2 * min_node:
        raise ForestParamError(f"n={n} is below 2 * min_node_size={2 * min_node}")
    if params.n_trees < 1:
        raise ForestParamError("n_trees must be positive")
    for f in np.flatnonzero(n_levels):
        observed = np.unique(Xm[:, f]).size
        if observed > MAX_CATEGORICAL_LEVELS:
            raise ForestParamError(
                f"categorical predictor {f} has {observed} observed levels; at most "
                f"{MAX_CATEGORICAL_LEVELS} are supported")
    if classification and (np.any(y < 0) or np.any(y >= n_classes)):
        raise ForestParamError("class index outside [0, n_classes)")

    constant = np.unique(y).size < 2
    if constant:
        warnings.warn("constant response: every tree is a single leaf", ConstantResponseWarning, stacklevel=2)
    arrays = _backend.core.build_forest(Xm, y, int(n_classes), n_levels, int(params.n_trees),
                                        int(mtry), int(min_node), int(params.seed) & ((1 << 64) - 1))
    return ForestModel(*arrays, n_levels=n_levels, n_classes=int(n_classes), constant_response=constant)


def permutation_importance(model, X, y, seed):
    """Mean increase of each tree's OOB error when one predictor is permuted."""
    Xm = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if model.constant_response:
        return np.zeros(model.n_predictors)
    return _backend.core.forest_importance(Xm, y, model.n_classes, model.n_levels, *model._nodes(),
                                           model.inbag, int(seed) & ((1 << 64) - 1))


def grafo_rank(data, params):
    """Edge ranks from per-variable forests (conservative worse-rank rule).

    Regression of a continuous column, classification of a categorical one;
    edge i-j gets the worse of its two within-regression importance ranks.  A
    response with fewer than 2 distinct values contributes no rankable edges.
    """
    p = data.p
    if p < 2:
        raise ValueError("need at least 2 variables")
    X = data.values
    n_levels = data.n_levels
    # R[j, i]: rank of predictor i in the regression of X_j
    R = np.full((p, p), np.inf)
    ok = np.zeros(p, dtype=bool)
    importances = np.full((p, p), np.nan)
    for j in range(p):
        y = X[:, j]
        if np.unique(y).size < 2:
            log.debug("response %s is constant in this sample; its edges are unrankable", data.names[j])
            continue
        others = np.array([k for k in range(p) if k != j])
        Xj = np.ascontiguousarray(X[:, others])
        fp = ForestParams(params.n_trees, params.mtry, params.min_node_size,
                          derive_seed(params.seed, FOREST, j))
        model = fit_forest(Xj, y, fp, n_levels=n_levels[others], n_classes=int(n_levels[j]))
        imp = permutation_importance(model, Xj, y, derive_seed(params.seed, IMPORTANCE, j))
        importances[j, others] = imp
        R[j, others] = average_ranks(imp)
        ok[j] = True
    ranked = combine_local_ranks(R, ok)
    ranked.scores["importance"] = importances
    return ranked


def combine_local_ranks(R, usable=None):
    """Edge ranks from a matrix of within-regression ranks.

    ``R[j, i]`` is the rank of predictor ``i`` when ``X_j`` is the response;
    edge i-j receives ``max(R[j, i], R[i, j])``.  Responses flagged False in
    ``usable`` make all their edges unselectable.
    """
    R = np.asarray(R, dtype=np.float64)
    p = R.shape[0]
    usable = np.ones(p, dtype=bool) if usable is None else np.asarray(usable, dtype=bool)
    pairs = edge_index(p)
    a, b = pairs[:, 0], pairs[:, 1]
    rank = np.maximum(R[a, b], R[b, a])
    return RankedEdges(p, rank, usable[a] & usable[b])
