"""Error-control experiments: simulate, estimate, count true and false positives."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from ._rng import LEARNER, REPETITION, derive_seed
from .dataset import dichotomize
from .forest import ForestParams
from .lasso import LassoParams
from .ranking import edges_to_mask, top_q_mask
from .simulate import MODEL_KINDS, simulate
from .stability import (compute_q, fp_bound, run_learner, selection_counts,
                        subsample_rankings)

log = logging.getLogger(__name__)

RANKING_LEARNERS = ("grafo", "stablasso")
FIXED_LEARNERS = ("oracle", "empty")
ALL_LEARNERS = RANKING_LEARNERS + FIXED_LEARNERS

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model", "p", "n"],
    "additionalProperties": False,
    "properties": {
        "model": {"enum": list(MODEL_KINDS)},
        "p": {"type": "integer", "minimum": 2},
        "n": {"type": "integer", "minimum": 4},
        "repetitions": {"type": "integer", "minimum": 1},
        "ev": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "learners": {"type": "array", "minItems": 1, "items": {"enum": list(ALL_LEARNERS)}},
        "pi_thr": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
        "n_sub": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "edge_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "rate_curves": {"type": "boolean"},
        "forest": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_trees": {"type": "integer", "minimum": 1},
                "mtry": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "default"}]},
                "min_node_size": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "lasso": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_lambda": {"type": "integer", "minimum": 1},
                "lambda_min_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "early_stop": {"type": "boolean"},
            },
        },
    },
}


class BenchConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    model: str
    p: int
    n: int
    repetitions: int = 50
    ev: tuple = (1.0, 5.0, 10.0)
    learners: tuple = ("grafo", "stablasso")
    pi_thr: float = 0.75
    n_sub: int = 100
    seed: int = 0
    edge_prob: float = 0.01
    rate_curves: bool = True
    forest: ForestParams = ForestParams()
    lasso: LassoParams = LassoParams()

    def __post_init__(self):
        object.__setattr__(self, "ev", tuple(float(e) for e in self.ev))
        object.__setattr__(self, "learners", tuple(self.learners))
        try:
            jsonschema.validate(self.to_dict(), CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BenchConfigError(_schema_message(exc)) from None

    @classmethod
    def from_dict(cls, obj):
        try:
            jsonschema.validate(obj, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise BenchConfigError(_schema_message(exc)) from None
        obj = dict(obj)
        if "forest" in obj:
            obj["forest"] = ForestParams(**obj["forest"])
        if "lasso" in obj:
            obj["lasso"] = LassoParams(**obj["lasso"])
        return cls(**obj)

    def to_dict(self):
        d = asdict(self)
        d["ev"] = list(self.ev)
        d["learners"] = list(self.learners)
        d["forest"].pop("seed")
        return d

    @property
    def q_grid(self):
        """Rate-curve cut points: 20 geometric steps from 1 to p(p-1)/8."""
        top = max(1.0, self.p * (self.p - 1) / 8)
        return sorted(set(int(q) for q in np.round(np.geomspace(1.0, top, 20))))


def _schema_message(exc):
    where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
    return f"config {where}: {exc.message}"


def evaluate(estimated, truth):
    """(TP, FP, TPR, FPR) of an estimated edge set against the true graph."""
    est = edges_to_mask(estimated, truth.p) if not isinstance(estimated, np.ndarray) else estimated
    true = truth.mask
    tp = int(np.sum(est & true))
    fp = int(np.sum(est & ~true))
    n_true = int(true.sum())
    n_false = true.size - n_true
    return tp, fp, (tp / n_true if n_true else 0.0), (fp / n_false if n_false else 0.0)


@dataclass
class RepetitionResult:
    r: int
    n_true: int
    cells: dict = field(default_factory=dict)      # (learner, ev) -> (q, tp, fp, tpr, fpr)
    curves: dict = field(default_factory=dict)     # (learner, selector, q) -> (tp, fp, tpr, fpr)
    error: str | None = None


def _learner_data(learner, data):
    if learner == "stablasso" and data.is_categorical.any():
        return dichotomize(data)
    return data


def run_repetition(cfg, r):
    seed = derive_seed(cfg.seed, REPETITION, r)
    try:
        _, data, truth = simulate(cfg.model, cfg.p, cfg.n, seed, edge_prob=cfg.edge_prob)
    except ValueError as exc:
        return RepetitionResult(r, 0, error=f"simulation failed: {exc}")
    res = RepetitionResult(r, len(truth.edges))
    m = cfg.p * (cfg.p - 1) // 2
    grid = cfg.q_grid if cfg.rate_curves else []
    try:
        for learner in cfg.learners:
            if learner in FIXED_LEARNERS:
                mask = truth.mask if learner == "oracle" else np.zeros(m, dtype=bool)
                scores = evaluate(mask, truth)
                for ev in cfg.ev:
                    q = min(compute_q(ev, cfg.pi_thr, cfg.p), m)
                    res.cells[(learner, ev)] = (q, *scores)
                for q in grid:
                    res.curves[(learner, "stable", q)] = scores
                    res.curves[(learner, "raw", q)] = scores
                continue
            params = cfg.forest if learner == "grafo" else cfg.lasso
            ldata = _learner_data(learner, data)
            rankings = subsample_rankings(ldata, learner, params, n_sub=cfg.n_sub, seed=seed)
            for ev in cfg.ev:
                q = min(compute_q(ev, cfg.pi_thr, cfg.p), m)
                sel = selection_counts(rankings, cfg.p, q) / cfg.n_sub >= cfg.pi_thr
                res.cells[(learner, ev)] = (q, *evaluate(sel, truth))
            if grid:
                raw = run_learner(learner, ldata, params, derive_seed(seed, LEARNER))
                for q in grid:
                    sel = selection_counts(rankings, cfg.p, q) / cfg.n_sub >= cfg.pi_thr
                    res.curves[(learner, "stable", q)] = evaluate(sel, truth)
                    res.curves[(learner, "raw", q)] = evaluate(top_q_mask(raw, q), truth)
    except (ValueError, ArithmeticError) as exc:
        log.warning("repetition %d failed: %s", r, exc)
        return RepetitionResult(r, res.n_true, error=str(exc))
    return res


def _run_job(job):
    cfg, r = job
    return run_repetition(cfg, r)


@dataclass
class BenchResult:
    config: BenchConfig
    cells: list
    curves: list
    true_edges: list
    failures: list

    def summary(self):
        return {
            "config": self.config.to_dict(),
            "cells": self.cells,
            "true_edges": self.true_edges,
            "failures": self.failures,
            "n_failed": len(self.failures),
        }

    def cell(self, learner, ev):
        for c in self.cells:
            if c["learner"] == learner and c["ev"] == float(ev):
                return c
        raise KeyError((learner, ev))

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_tsv(out / "cells.tsv", self.cells,
                   ["learner", "ev", "q", "fp_bound", "mean_tp", "mean_fp", "mean_tpr", "mean_fpr", "n_ok"])
        _write_tsv(out / "curves.tsv", self.curves,
                   ["learner", "selector", "q", "fp_bound", "mean_tp", "mean_fp", "mean_tpr", "mean_fpr", "n_ok"])
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        # gnuplot-ready panels: bound column next to the observed means
        for learner in self.config.learners:
            rows = [c for c in self.cells if c["learner"] == learner]
            lines = ["# ev\tq\tfp_bound\tmean_tp\tmean_fp"]
            lines += [f"{c['ev']!r}\t{c['q']}\t{c['fp_bound']!r}\t{c['mean_tp']!r}\t{c['mean_fp']!r}" for c in rows]
            (out / f"bound_{learner}.dat").write_text("\n".join(lines) + "\n")
            for selector in ("stable", "raw"):
                rows = [c for c in self.curves if c["learner"] == learner and c["selector"] == selector]
                if not rows:
                    continue
                lines = ["# q\tfp_bound\tmean_fpr\tmean_tpr"]
                lines += [f"{c['q']}\t{c['fp_bound']!r}\t{c['mean_fpr']!r}\t{c['mean_tpr']!r}" for c in rows]
                (out / f"rates_{learner}_{selector}.dat").write_text("\n".join(lines) + "\n")


def _write_tsv(path, rows, cols):
    def fmt(v):
        return repr(float(v)) if isinstance(v, float) else str(v)
    lines = ["\t".join(cols)] + ["\t".join(fmt(row[c]) for c in cols) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _mean(values):
    return float(np.mean(values)) if values else float("nan")


def run_bench(cfg, workers=1):
    """Run every repetition and average the per-cell counts over successful ones."""
    jobs = [(cfg, r) for r in range(cfg.repetitions)]
    if workers > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_run_job, jobs))
    else:
        reps = [_run_job(j) for j in jobs]
    ok = [r for r in reps if r.error is None]
    failures = [{"repetition": r.r, "error": r.error} for r in reps if r.error is not None]
    cells = []
    for learner in cfg.learners:
        for ev in cfg.ev:
            vals = [r.cells[(learner, ev)] for r in ok]
            q = min(compute_q(ev, cfg.pi_thr, cfg.p), cfg.p * (cfg.p - 1) // 2)
            cells.append({
                "learner": learner, "ev": ev, "q": q, "fp_bound": fp_bound(q, cfg.pi_thr, cfg.p),
                "mean_tp": _mean([v[1] for v in vals]), "mean_fp": _mean([v[2] for v in vals]),
                "mean_tpr": _mean([v[3] for v in vals]), "mean_fpr": _mean([v[4] for v in vals]),
                "n_ok": len(vals),
            })
    curves = []
    if cfg.rate_curves:
        for learner in cfg.learners:
            for selector in ("stable", "raw"):
                for q in cfg.q_grid:
                    vals = [r.curves[(learner, selector, q)] for r in ok]
                    curves.append({
                        "learner": learner, "selector": selector, "q": q,
                        "fp_bound": fp_bound(q, cfg.pi_thr, cfg.p),
                        "mean_tp": _mean([v[0] for v in vals]), "mean_fp": _mean([v[1] for v in vals]),
                        "mean_tpr": _mean([v[2] for v in vals]), "mean_fpr": _mean([v[3] for v in vals]),
                        "n_ok": len(vals),
                    })
    return BenchResult(cfg, cells, curves, [r.n_true for r in reps], failures)
