"""Undirected edge rankings and the top-q cut shared by every base learner."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata


class Edge(NamedTuple):
    i: int
    j: int

    @classmethod
    def of(cls, a, b):
        if a == b:
            raise ValueError("self-loop")
        return cls(int(min(a, b)), int(max(a, b)))


def edge_index(p):
    """All pairs (i, j), i < j, in row-major order; shape (p(p-1)/2, 2)."""
    i, j = np.triu_indices(p, k=1)
    return np.column_stack([i, j])


def pair_id(i, j, p):
    """Position of edge (i, j), i < j, in ``edge_index(p)``."""
    return i * p - i * (i + 1) // 2 + (j - i - 1)


@dataclass
class RankedEdges:
    """Every candidate edge with a rank (smaller is better).

    Unselectable edges carry rank ``inf``.  ``scores`` holds optional
    learner-specific diagnostics aligned with ``pairs``.
    """

    p: int
    rank: np.ndarray
    selectable: np.ndarray
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.p * (self.p - 1) // 2
        self.rank = np.asarray(self.rank, dtype=np.float64)
        self.selectable = np.asarray(self.selectable, dtype=bool)
        if self.rank.shape != (m,) or self.selectable.shape != (m,):
            raise ValueError(f"expected {m} edges for p={self.p}")
        self.rank = np.where(self.selectable, self.rank, np.inf)
        if not np.all(np.isfinite(self.rank[self.selectable])):
            raise ValueError("selectable edges need finite ranks")

    @property
    def pairs(self):
        return edge_index(self.p)

    def entries(self):
        return [(Edge(int(i), int(j)), float(r), bool(s))
                for (i, j), r, s in zip(self.pairs, self.rank, self.selectable)]


def average_ranks(scores):
    """Rank 1 for the largest score; ties share their average rank."""
    return rankdata(-np.asarray(scores, dtype=np.float64), method="average")


def top_q_mask(ranked, q):
    """Boolean mask of the edges kept by ``select_top_q``."""
    m = ranked.rank.shape[0]
    keep = np.zeros(m, dtype=bool)
    if q <= 0:
        return keep
    idx = np.flatnonzero(ranked.selectable)
    if idx.size <= q:
        keep[idx] = True
        return keep
    r = ranked.rank[idx]
    order = np.argsort(r, kind="stable")
    boundary = r[order[q - 1]]
    if r[order[q]] == boundary:
        # a tie group straddles the cut: keep only strictly better edges
        keep[idx[r < boundary]] = True
    else:
        keep[idx[order[:q]]] = True
    return keep


def select_top_q(ranked, q):
    """The q best-ranked edges, dropping any tie group that straddles q."""
    if q > ranked.p * (ranked.p - 1) // 2:
        raise ValueError(f"q={q} exceeds the number of candidate edges")
    mask = top_q_mask(ranked, q)
    return {Edge(int(i), int(j)) for i, j in ranked.pairs[mask]}


def edges_to_mask(edges, p):
    mask = np.zeros(p * (p - 1) // 2, dtype=bool)
    for e in edges:
        e = Edge.of(*e)
        mask[pair_id(e.i, e.j, p)] = True
    return mask


def mask_to_edges(mask, p):
    return {Edge(int(i), int(j)) for i, j in edge_index(p)[np.asarray(mask, dtype=bool)]}
