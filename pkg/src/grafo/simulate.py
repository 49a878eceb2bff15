"""Ground-truth generators: DAG-based models, moralization and Ising/Gibbs."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from ._rng import DATA, GIBBS, MODEL, generator
from .dataset import Categorical, Continuous, MixedDataset
from .ranking import Edge, edges_to_mask

DAG_KINDS = ("gaussian", "gaussian_interactions", "gaussian_nonlinear", "bernoulli", "multinomial", "mixed")
MODEL_KINDS = DAG_KINDS + ("ising",)
LEVEL_CHOICES = (3, 4, 5)
NONLINEAR_AMPLIFICATION = 5.0
GIBBS_CHUNK = 8192


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TrueCig:
    p: int
    edges: frozenset

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset(Edge.of(*e) for e in self.edges))
        for e in self.edges:
            if e.j >= self.p:
                raise ModelError(f"edge {e} outside p={self.p}")

    @property
    def mask(self):
        return edges_to_mask(self.edges, self.p)

    def write_tsv(self, path):
        lines = ["i\tj"] + [f"{e.i}\t{e.j}" for e in sorted(self.edges)]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class DagModel:
    """Weights of a DAG model over X_0..X_{p-1}, topologically ordered by index.

    ``n_levels[j]`` is 0 for continuous and +-1 coded binary columns and the
    category count for multinomial ones.  ``u``/``v`` map a parent-child pair
    to its sign vectors, ``B`` maps ``(i, k, j)`` to an interaction weight,
    ``linear[j]`` lists the parents entering linearly in the nonlinear model.
    """

    kind: str
    p: int
    A: np.ndarray
    n_levels: np.ndarray
    B: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    linear: dict = field(default_factory=dict)

    def parents(self, j):
        return [int(i) for i in np.flatnonzero(self.A[:, j])]

    def interactions(self, j):
        return sorted((i, k) for (i, k, jj) in self.B if jj == j)

    def is_gaussian(self, j):
        if self.kind == "mixed":
            return j % 2 == 0      # X_1, X_3, ... in 1-based numbering
        return self.kind.startswith("gaussian")

    def column_types(self):
        types = []
        for j in range(self.p):
            if self.kind == "bernoulli":
                types.append(Categorical(("-1", "1")))
            elif self.n_levels[j] > 0:
                types.append(Categorical([str(s + 1) for s in range(int(self.n_levels[j]))]))
            else:
                types.append(Continuous())
        return types

    def to_json(self):
        return {
            "kind": self.kind,
            "p": self.p,
            "A": [[int(i), int(j), float(self.A[i, j])] for i, j in zip(*np.nonzero(self.A))],
            "n_levels": self.n_levels.tolist(),
            "B": [[int(i), int(k), int(j), float(w)] for (i, k, j), w in sorted(self.B.items())],
            "u": [[int(i), int(j), list(map(int, s))] for (i, j), s in sorted(self.u.items())],
            "v": [[int(i), int(j), list(map(int, s))] for (i, j), s in sorted(self.v.items())],
            "linear": {str(j): list(map(int, ls)) for j, ls in sorted(self.linear.items())},
        }


@dataclass
class IsingModel:
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if not np.array_equal(self.theta, self.theta.T):
            raise ModelError("theta must be symmetric")

    @property
    def p(self):
        return self.theta.shape[0]

    def to_json(self):
        return {"kind": "ising", "p": self.p, "theta": self.theta.astype(int).tolist()}


def _weights(rng, size):
    return rng.uniform(0.1, 1.0, size) * rng.choice([-1.0, 1.0], size)


def _half(count, rng):
    # nearest integer to count/2; an exact .5 is settled by a fair coin
    if count % 2 == 0:
        return count // 2
    return count // 2 + int(rng.integers(2))


def _mixed_signs(rng, length):
    """+-1 vector of the given length with both signs present."""
    while True:
        s = rng.choice([-1, 1], length)
        if abs(int(s.sum())) < length:
            return s


def sample_dag_model(kind, p, seed, edge_prob=0.01):
    """Random DAG model of the given kind; each a_ij (i < j) is nonzero with ``edge_prob``."""
    if kind not in DAG_KINDS:
        raise ModelError(f"unknown model kind {kind!r}; choose from {', '.join(DAG_KINDS)}")
    if p < 2:
        raise ModelError("p must be at least 2")
    rng = generator(seed, MODEL)
    A = np.zeros((p, p))
    iu, ju = np.triu_indices(p, k=1)
    on = rng.random(iu.size) < edge_prob
    A[iu[on], ju[on]] = _weights(rng, int(on.sum()))

    n_levels = np.zeros(p, dtype=np.int32)
    if kind in ("multinomial", "mixed"):
        draws = rng.choice(LEVEL_CHOICES, p)
        for j in range(p):
            if kind == "multinomial" or j % 2 == 1:
                n_levels[j] = draws[j]
    model = DagModel(kind, p, A, n_levels)

    for j in range(p):
        pa = model.parents(j)
        if kind == "gaussian_interactions":
            pairs = list(itertools.combinations(pa, 2))
            m = _half(len(pairs), rng)
            chosen = sorted(rng.choice(len(pairs), m, replace=False).tolist()) if m else []
            for c in chosen:
                i, k = pairs[c]
                model.B[(i, k, j)] = float(_weights(rng, 1)[0])
        elif kind == "gaussian_nonlinear":
            m = _half(len(pa), rng)
            model.linear[j] = sorted(rng.choice(pa, m, replace=False).tolist()) if m else []
        elif kind in ("multinomial", "mixed"):
            for i in pa:
                if n_levels[i] > 0:
                    model.u[(i, j)] = _mixed_signs(rng, int(n_levels[i]))
                if n_levels[j] > 0:
                    model.v[(i, j)] = _mixed_signs(rng, int(n_levels[j]))
                else:
                    model.v[(i, j)] = rng.choice([-1, 1], 1)
    return model


def _categorical_draw(rng, eta):
    """One category per row from softmax(eta), eta of shape (n, C)."""
    eta = eta - eta.max(axis=1, keepdims=True)
    prob = np.exp(eta)
    prob /= prob.sum(axis=1, keepdims=True)
    u = rng.random(eta.shape[0])
    cum = np.cumsum(prob, axis=1)
    return np.minimum((u[:, None] >= cum).sum(axis=1), eta.shape[1] - 1)


def sample_data(model, n, seed):
    """n draws from the model, sampled variable by variable in index order."""
    if n < 1:
        raise ModelError("n must be positive")
    rng = generator(seed, DATA)
    p, A = model.p, model.A
    X = np.zeros((n, p))
    for j in range(p):
        pa = model.parents(j)
        if model.kind in ("gaussian", "gaussian_interactions"):
            mu = X[:, pa] @ A[pa, j] if pa else np.zeros(n)
            for i, k in model.interactions(j):
                mu = mu + model.B[(i, k, j)] * X[:, i] * X[:, k]
            X[:, j] = mu + rng.standard_normal(n)
        elif model.kind == "gaussian_nonlinear":
            mu = np.zeros(n)
            lin = set(model.linear.get(j, []))
            for i in pa:
                if i in lin:
                    term = X[:, i]
                else:
                    absx = np.abs(X[:, i])
                    term = np.log(absx, out=np.zeros(n), where=absx > 0)
                mu = mu + NONLINEAR_AMPLIFICATION * A[i, j] * term
            X[:, j] = mu + rng.standard_normal(n)
        elif model.kind == "bernoulli":
            eta = X[:, pa] @ A[pa, j] if pa else np.zeros(n)
            X[:, j] = np.where(rng.random(n) < 1.0 / (1.0 + np.exp(-eta)), 1.0, -1.0)
        else:
            C = int(model.n_levels[j])
            eta = np.zeros((n, max(C, 1)))
            for i in pa:
                if model.n_levels[i] > 0:
                    u = model.u[(i, j)]
                    # sum_l u_l (2 [x_i = l] - 1)
                    term = 2.0 * u[X[:, i].astype(np.int64)] - u.sum()
                else:
                    term = X[:, i]
                eta += A[i, j] * term[:, None] * model.v[(i, j)][None, :]
            if C == 0:
                X[:, j] = eta[:, 0] + rng.standard_normal(n)
            else:
                X[:, j] = _categorical_draw(rng, eta)
    if model.kind == "bernoulli":
        X = (X + 1.0) / 2.0           # store level indices; level "-1" is index 0
    names = [f"X{j + 1}" for j in range(p)]
    return MixedDataset(names, model.column_types(), X)


def moralize(model):
    """Conditional independence graph of a DAG model: parent-child plus married parents."""
    edges = set()
    for j in range(model.p):
        pa = set(model.parents(j))
        for i, k in model.interactions(j):
            pa.update((i, k))
        edges.update(Edge.of(i, j) for i in pa)
        edges.update(Edge.of(i, k) for i, k in itertools.combinations(sorted(pa), 2))
    return TrueCig(model.p, frozenset(edges))


def sample_ising(p, seed):
    """Symmetric theta in {-1,0,1}; off-diagonal density gives mean degree 4."""
    if p < 2:
        raise ModelError("p must be at least 2")
    rng = generator(seed, MODEL)
    prob = min(1.0, 4.0 / (p - 1))
    theta = np.zeros((p, p))
    iu, ju = np.triu_indices(p, k=1)
    on = rng.random(iu.size) < prob
    theta[iu[on], ju[on]] = rng.choice([-1.0, 1.0], int(on.sum()))
    theta = theta + theta.T
    theta[np.diag_indices(p)] = rng.choice([-1.0, 0.0, 1.0], p)
    return IsingModel(theta)


def ising_cig(model):
    iu, ju = np.nonzero(np.triu(model.theta, k=1))
    return TrueCig(model.p, frozenset(Edge(int(i), int(j)) for i, j in zip(iu, ju)))


def gibbs_states(model, n, burn_in_sweeps=1000, thin_sweeps=100, seed=0):
    """n states in {-1,+1}^p from a systematic-scan Gibbs chain, shape (n, p)."""
    if n < 1 or thin_sweeps < 1 or burn_in_sweeps < 0:
        raise ModelError("need n >= 1, thin_sweeps >= 1 and burn_in_sweeps >= 0")
    rng = generator(seed, GIBBS)
    core = _backend.core
    theta = np.ascontiguousarray(model.theta, dtype=np.float64)
    p = model.p
    x = np.where(rng.random(p) < 0.5, -1.0, 1.0)
    empty = np.empty((0, p))
    left = burn_in_sweeps
    while left > 0:
        m = min(left, GIBBS_CHUNK)
        core.gibbs_sweeps(theta, x, rng.random((m, p)), 1, empty)
        left -= m
    out = np.empty((n, p))
    per_chunk = max(1, GIBBS_CHUNK // thin_sweeps)
    row = 0
    while row < n:
        k = min(per_chunk, n - row)
        row += core.gibbs_sweeps(theta, x, rng.random((k * thin_sweeps, p)), thin_sweeps, out[row:row + k])
    return out


def gibbs_sample(model, n, burn_in_sweeps=1000, thin_sweeps=100, seed=0):
    """Gibbs draws as a MixedDataset of -1/+1 categorical columns."""
    states = gibbs_states(model, n, burn_in_sweeps, thin_sweeps, seed)
    names = [f"X{j + 1}" for j in range(model.p)]
    return MixedDataset(names, [Categorical(("-1", "1"))] * model.p, (states + 1.0) / 2.0)


def ising_distribution(theta):
    """Exact probabilities of all 2^p states (rows of ``states``, -1/+1)."""
    theta = np.asarray(theta, dtype=np.float64)
    p = theta.shape[0]
    if p > 20:
        raise ModelError("exact enumeration is limited to p <= 20")
    states = np.array(list(itertools.product([-1.0, 1.0], repeat=p)))
    upper = np.triu(theta, k=1)
    energy = states @ np.diag(theta) + np.einsum("si,ij,sj->s", states, upper, states)
    w = np.exp(energy - energy.max())
    return states, w / w.sum()


def simulate(kind, p, n, seed, edge_prob=0.01):
    """Model, dataset and true CIG for any model kind (six DAG kinds or ``ising``)."""
    if kind == "ising":
        model = sample_ising(p, seed)
        return model, gibbs_sample(model, n, seed=seed), ising_cig(model)
    model = sample_dag_model(kind, p, seed, edge_prob=edge_prob)
    return model, sample_data(model, n, seed), moralize(model)


def write_model_json(model, path):
    Path(path).write_text(json.dumps(model.to_json(), indent=1) + "\n")
