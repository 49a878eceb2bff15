"""Stability Selection over edge rankings: subsampling, frequencies, the q cut."""
from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._rng import LEARNER, SUBSAMPLE, derive_seed, generator
from .forest import ForestParams, grafo_rank
from .lasso import LassoParams, stablasso_rank
from .ranking import Edge, edge_index, top_q_mask

log = logging.getLogger(__name__)


class StabilityParamError(ValueError):
    pass


@dataclass(frozen=True)
class StabilityParams:
    expected_fp_bound: float = 5.0
    pi_thr: float = 0.75
    n_sub: int = 100
    seed: int = 0

    def __post_init__(self):
        _check_pi(self.pi_thr)
        if not self.expected_fp_bound > 0:
            raise StabilityParamError("expected_fp_bound must be positive")
        if self.n_sub < 1:
            raise StabilityParamError("n_sub must be positive")


def _check_pi(pi_thr):
    if not 0.5 < pi_thr < 1:
        raise StabilityParamError(f"pi_thr={pi_thr} must lie in (0.5, 1)")


def _exact(x):
    # decimal value of a float as written, so 0.7 means 7/10
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


def compute_q(ev, pi_thr, p):
    """Largest per-subsample edge count whose false-positive bound is <= ev."""
    _check_pi(pi_thr)
    if p < 2 or not ev > 0:
        raise StabilityParamError("need p >= 2 and ev > 0")
    budget = (2 * _exact(pi_thr) - 1) * _exact(ev) * (p * (p - 1) // 2)
    q = math.isqrt(math.floor(budget))
    if q == 0:
        warnings.warn(f"q=0 for ev={ev}, pi_thr={pi_thr}, p={p}: nothing can be selected", stacklevel=2)
    return q


def fp_bound(q, pi_thr, p):
    """Upper bound on the expected number of false positives for a given q."""
    _check_pi(pi_thr)
    return float(Fraction(int(q) ** 2) / ((2 * _exact(pi_thr) - 1) * (p * (p - 1) // 2)))


# ------------------------------------------------------------------ learners


def _grafo(data, params, seed):
    params = params or ForestParams()
    return grafo_rank(data, replace(params, seed=seed))


def _stablasso(data, params, seed):
    return stablasso_rank(data, params or LassoParams())


LEARNERS = {"grafo": _grafo, "stablasso": _stablasso}


def run_learner(learner, data, params=None, seed=0):
    try:
        fn = LEARNERS[learner]
    except KeyError:
        raise StabilityParamError(f"unknown learner {learner!r}; choose from {sorted(LEARNERS)}") from None
    return fn(data, params, seed)


def subsample_rows(n, k, seed):
    """Sorted row indices of subsample k: floor(n/2) rows without replacement."""
    rows = generator(seed, SUBSAMPLE, k).choice(n, size=n // 2, replace=False)
    return np.sort(rows)


def _rank_job(job):
    learner, data, params, seed, k = job
    rows = subsample_rows(data.n, k, seed)
    try:
        return run_learner(learner, data.take(rows), params, derive_seed(seed, LEARNER, k))
    except (ValueError, ArithmeticError) as exc:
        log.warning("subsample %d: %s run failed (%s); it contributes no edges", k, learner, exc)
        return None


def subsample_rankings(data, learner, params=None, *, n_sub=100, seed=0, workers=1):
    """Learner rankings on ``n_sub`` half-size subsamples, in subsample order.

    Failed runs appear as ``None``.  The result does not depend on ``workers``.
    """
    if data.n < 4:
        raise StabilityParamError(f"need at least 4 rows, got {data.n}")
    jobs = [(learner, data, params, seed, k) for k in range(n_sub)]
    if workers <= 1 or n_sub == 1:
        return [_rank_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_rank_job, jobs))


def selection_counts(rankings, p, q):
    """Per-edge number of subsample rankings whose top-q cut keeps the edge."""
    counts = np.zeros(p * (p - 1) // 2, dtype=np.int64)
    for ranked in rankings:
        if ranked is not None:
            counts += top_q_mask(ranked, q)
    return counts


@dataclass
class StableGraph:
    """Selection frequency of every candidate edge and the thresholded graph."""

    p: int
    counts: np.ndarray
    q: int
    params: StabilityParams
    learner: str = ""
    names: tuple = ()
    n_failed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def frequency(self):
        return self.counts / self.params.n_sub

    @property
    def selected_mask(self):
        return self.frequency >= self.params.pi_thr

    @property
    def edges(self):
        return [(Edge(int(i), int(j)), float(f)) for (i, j), f in zip(edge_index(self.p), self.frequency)]

    @property
    def selected(self):
        return {Edge(int(i), int(j)) for i, j in edge_index(self.p)[self.selected_mask]}

    @property
    def fp_bound(self):
        return fp_bound(self.q, self.params.pi_thr, self.p)

    def metadata(self):
        meta = {
            "learner": self.learner,
            "p": self.p,
            "expected_fp_bound": self.params.expected_fp_bound,
            "pi_thr": self.params.pi_thr,
            "q": self.q,
            "fp_bound": self.fp_bound,
            "n_sub": self.params.n_sub,
            "seed": self.params.seed,
            "n_failed_subsamples": self.n_failed,
            "n_selected": int(self.selected_mask.sum()),
        }
        meta.update(self.extra)
        return meta

    def write_tsv(self, path):
        lines = ["i\tj\tfrequency\tselected"]
        for (i, j), f, s in zip(edge_index(self.p), self.frequency, self.selected_mask):
            lines.append(f"{i}\t{j}\t{float(f)!r}\t{int(s)}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_dot(self, path):
        names = self.names or tuple(f"X{k}" for k in range(self.p))
        lines = ["graph cig {"]
        lines += [f'  n{k} [label="{nm}"];' for k, nm in enumerate(names)]
        for (i, j), f, s in zip(edge_index(self.p), self.frequency, self.selected_mask):
            if s:
                lines.append(f'  n{i} -- n{j} [label="{f:.2f}"];')
        lines.append("}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")


def stable_graph(rankings, p, sp, *, learner="", names=(), q=None):
    """Assemble a StableGraph from precomputed subsample rankings."""
    if len(rankings) != sp.n_sub:
        raise StabilityParamError(f"expected {sp.n_sub} rankings, got {len(rankings)}")
    if q is None:
        q = min(compute_q(sp.expected_fp_bound, sp.pi_thr, p), p * (p - 1) // 2)
    counts = selection_counts(rankings, p, q)
    failed = sum(r is None for r in rankings)
    return StableGraph(p, counts, q, sp, learner, tuple(names), failed)


def stability_select(data, learner, sp, learner_params=None, *, workers=1):
    """Edges selected in at least a ``pi_thr`` share of half-size subsamples.

    Every subsample run is cut at q derived from ``sp.expected_fp_bound``.
    Learner seeds come from ``sp.seed``; any seed inside ``learner_params``
    is ignored so that one master seed controls the whole run.
    """
    rankings = subsample_rankings(data, learner, learner_params, n_sub=sp.n_sub, seed=sp.seed, workers=workers)
    return stable_graph(rankings, data.p, sp, learner=learner, names=data.names)


def raw_select(data, learner, q, learner_params=None, seed=0):
    """Top-q edges of one learner run on all rows."""
    if q > data.p * (data.p - 1) // 2:
        raise StabilityParamError(f"q={q} exceeds the number of candidate edges")
    ranked = run_learner(learner, data, learner_params, seed)
    return {Edge(int(i), int(j)) for i, j in edge_index(data.p)[top_q_mask(ranked, q)]}
