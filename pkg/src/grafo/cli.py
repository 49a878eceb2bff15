"""Command-line entry point: ``grafo simulate | estimate | bench``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

from .bench import BenchConfig, run_bench
from .dataset import dichotomize, ingest_csv, write_csv, write_schema
from .forest import ForestParams
from .lasso import LassoParams
from .ranking import edge_index, top_q_mask
from .simulate import MODEL_KINDS, simulate, write_model_json
from .stability import StabilityParams, run_learner, stability_select

log = logging.getLogger("grafo")

WORKERS_ENV = "GRAFO_WORKERS"

_FOREST_KEYS = {"n_trees": {"type": "integer", "minimum": 1},
                "mtry": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "default"}]},
                "min_node_size": {"type": ["integer", "null"], "minimum": 1}}
_LASSO_KEYS = {"n_lambda": {"type": "integer", "minimum": 1},
               "lambda_min_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
               "tolerance": {"type": "number", "exclusiveMinimum": 0},
               "max_iter": {"type": "integer", "minimum": 1},
               "early_stop": {"type": "boolean"}}

SIMULATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {"enum": list(MODEL_KINDS)},
        "p": {"type": "integer", "minimum": 2},
        "n": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "edge_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "burn_in": {"type": "integer", "minimum": 0},
        "thin": {"type": "integer", "minimum": 1},
    },
}

ESTIMATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "learner": {"enum": ["grafo", "stablasso"]},
        "ev": {"type": "number", "exclusiveMinimum": 0},
        "pi_thr": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
        "n_sub": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "raw_q": {"type": ["integer", "null"], "minimum": 0},
        "dichotomize": {"type": "boolean"},
        "forest": {"type": "object", "additionalProperties": False, "properties": _FOREST_KEYS},
        "lasso": {"type": "object", "additionalProperties": False, "properties": _LASSO_KEYS},
    },
}


class CliError(Exception):
    """Failure reported as one ``error: <kind>: <message>`` line."""

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _seed(text):
    v = int(text)
    if v < 0 or v >= 1 << 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit non-negative integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def build_parser():
    parser = _Parser(prog="grafo", description="Conditional independence graphs with Stability Selection.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress (repeat for debug)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="sample a model, a dataset and its true graph")
    sim.add_argument("--config", type=Path, help="JSON file with defaults; flags take precedence")
    sim.add_argument("--model", help=f"one of: {', '.join(MODEL_KINDS)}")
    sim.add_argument("--p", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--seed", type=_seed)
    sim.add_argument("--edge-prob", type=float, help="DAG edge density (default 0.01)")
    sim.add_argument("--burn-in", type=int, help="Gibbs burn-in sweeps for ising (default 1000)")
    sim.add_argument("--thin", type=int, help="Gibbs sweeps between kept draws for ising (default 100)")
    sim.add_argument("--out-dir", type=Path, required=True)

    est = sub.add_parser("estimate", help="stable graph (or raw top-q edges) from a CSV")
    est.add_argument("--config", type=Path, help="JSON file with defaults; flags take precedence")
    est.add_argument("--data", type=Path, required=True)
    est.add_argument("--schema", type=Path, required=True)
    est.add_argument("--learner", choices=["grafo", "stablasso"])
    est.add_argument("--ev", type=float, help="bound on expected false positives (default 5)")
    est.add_argument("--pi-thr", type=float, help="selection frequency threshold in (0.5, 1) (default 0.75)")
    est.add_argument("--n-sub", type=_positive_int, help="number of subsamples (default 100)")
    est.add_argument("--seed", type=_seed)
    est.add_argument("--raw-q", type=int, help="skip subsampling; keep the top q edges of one full-data run")
    est.add_argument("--dichotomize", action="store_true", default=None,
                     help="recode every column to -1/+1 (needed for stablasso on non-continuous data)")
    est.add_argument("--n-trees", type=_positive_int)
    est.add_argument("--mtry", type=_positive_int)
    est.add_argument("--min-node-size", type=_positive_int)
    est.add_argument("--n-lambda", type=_positive_int)
    est.add_argument("--lambda-min-ratio", type=float)
    est.add_argument("--workers", type=_positive_int, default=None)
    est.add_argument("--out-dir", type=Path, required=True)

    ben = sub.add_parser("bench", help="error-control experiment over simulated repetitions")
    ben.add_argument("--config", type=Path, required=True)
    ben.add_argument("--seed", type=_seed)
    ben.add_argument("--repetitions", type=_positive_int)
    ben.add_argument("--workers", type=_positive_int, default=None)
    ben.add_argument("--out-dir", type=Path, required=True)
    return parser


def _load_config(path, schema):
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError("file-not-found", f"{path}") from None
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{path}: invalid JSON: {exc.msg} at line {exc.lineno}") from None
    if schema is not None:
        try:
            jsonschema.validate(obj, schema)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise CliError("config", f"{path}: {where}: {exc.message}") from None
    return obj


def _pick(flag, cfg, key, default):
    if flag is not None:
        return flag
    return cfg.get(key, default)


def cmd_simulate(args):
    cfg = _load_config(args.config, SIMULATE_SCHEMA)
    model = _pick(args.model, cfg, "model", None)
    p = _pick(args.p, cfg, "p", None)
    n = _pick(args.n, cfg, "n", None)
    seed = _pick(args.seed, cfg, "seed", 0)
    edge_prob = _pick(args.edge_prob, cfg, "edge_prob", 0.01)
    if model not in MODEL_KINDS:
        raise CliError("usage", f"--model must be one of: {', '.join(MODEL_KINDS)}")
    if p is None or p < 2:
        raise CliError("usage", "--p must be at least 2")
    if n is None or n < 1:
        raise CliError("usage", "--n must be positive")
    if not 0 <= edge_prob <= 1:
        raise CliError("usage", "--edge-prob must lie in [0, 1]")
    out = _out_dir(args.out_dir)
    if model == "ising":
        from .simulate import gibbs_sample, ising_cig, sample_ising
        burn_in = _pick(args.burn_in, cfg, "burn_in", 1000)
        thin = _pick(args.thin, cfg, "thin", 100)
        if burn_in < 0 or thin < 1:
            raise CliError("usage", "--burn-in must be >= 0 and --thin >= 1")
        m = sample_ising(p, seed)
        data, truth = gibbs_sample(m, n, burn_in, thin, seed), ising_cig(m)
    else:
        m, data, truth = simulate(model, p, n, seed, edge_prob=edge_prob)
    write_csv(data, out / "data.csv")
    write_schema(data, out / "schema.json")
    truth.write_tsv(out / "truth.tsv")
    write_model_json(m, out / "model.json")
    log.info("wrote %s (n=%d, p=%d, %d true edges)", out, n, p, len(truth.edges))


def _forest_params(args, cfg):
    f = dict(cfg.get("forest", {}))
    for key in ("n_trees", "mtry", "min_node_size"):
        if getattr(args, key) is not None:
            f[key] = getattr(args, key)
    return ForestParams(**f)


def _lasso_params(args, cfg):
    f = dict(cfg.get("lasso", {}))
    for key in ("n_lambda", "lambda_min_ratio"):
        if getattr(args, key) is not None:
            f[key] = getattr(args, key)
    try:
        return LassoParams(**f)
    except ValueError as exc:
        raise CliError("usage", str(exc)) from None


def cmd_estimate(args):
    cfg = _load_config(args.config, ESTIMATE_SCHEMA)
    learner = _pick(args.learner, cfg, "learner", "grafo")
    ev = _pick(args.ev, cfg, "ev", 5.0)
    pi_thr = _pick(args.pi_thr, cfg, "pi_thr", 0.75)
    n_sub = _pick(args.n_sub, cfg, "n_sub", 100)
    seed = _pick(args.seed, cfg, "seed", 0)
    raw_q = _pick(args.raw_q, cfg, "raw_q", None)
    dich = bool(_pick(args.dichotomize, cfg, "dichotomize", False))
    workers = args.workers or _default_workers()
    if not 0.5 < pi_thr < 1:
        raise CliError("usage", f"--pi-thr={pi_thr} must lie in (0.5, 1)")
    if not ev > 0:
        raise CliError("usage", "--ev must be positive")
    if raw_q is not None and raw_q < 0:
        raise CliError("usage", "--raw-q must be non-negative")
    for path in (args.data, args.schema):
        if not Path(path).is_file():
            raise CliError("file-not-found", str(path))
    data, dropped = ingest_csv(args.data, args.schema)
    params = _forest_params(args, cfg) if learner == "grafo" else _lasso_params(args, cfg)
    if learner == "stablasso":
        if dich:
            data = dichotomize(data)
        elif data.is_categorical.any():
            raise CliError("data", "stablasso needs all-continuous data; pass --dichotomize to recode "
                                   "columns to -1/+1 (median split, balanced level split)")
    elif dich:
        raise CliError("usage", "--dichotomize applies to stablasso only")
    out = _out_dir(args.out_dir)
    extra = {"n_rows": data.n, "n_dropped_rows": dropped, "dichotomized": dich}
    if raw_q is not None:
        m = data.p * (data.p - 1) // 2
        if raw_q > m:
            raise CliError("usage", f"--raw-q={raw_q} exceeds the {m} candidate edges")
        ranked = run_learner(learner, data, params, seed)
        _write_raw(out, data, ranked, raw_q, learner, seed, extra)
        return
    sp = StabilityParams(ev, pi_thr, n_sub, seed)
    graph = stability_select(data, learner, sp, params, workers=workers)
    graph.extra.update(extra)
    graph.write_tsv(out / "edges.tsv")
    graph.write_dot(out / "graph.dot")
    graph.write_json(out / "meta.json")
    log.info("selected %d edges (q=%d)", len(graph.selected), graph.q)


def _write_raw(out, data, ranked, q, learner, seed, extra):
    mask = top_q_mask(ranked, q)
    pairs = edge_index(data.p)
    lines = ["i\tj\trank\tselected"]
    for (i, j), r, s in zip(pairs, ranked.rank, mask):
        lines.append(f"{i}\t{j}\t{float(r)!r}\t{int(s)}")
    (out / "edges.tsv").write_text("\n".join(lines) + "\n")
    dot = ["graph cig {"] + [f'  n{k} [label="{nm}"];' for k, nm in enumerate(data.names)]
    dot += [f"  n{i} -- n{j};" for (i, j), s in zip(pairs, mask) if s]
    (out / "graph.dot").write_text("\n".join(dot + ["}"]) + "\n")
    meta = {"mode": "raw", "learner": learner, "p": data.p, "q": q, "seed": seed,
            "n_selected": int(mask.sum()), **extra}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def cmd_bench(args):
    cfg = _load_config(args.config, None)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.repetitions is not None:
        cfg["repetitions"] = args.repetitions
    try:
        config = BenchConfig.from_dict(cfg)
    except ValueError as exc:
        raise CliError("config", f"{args.config}: {exc}") from None
    out = _out_dir(args.out_dir)
    result = run_bench(config, workers=args.workers or _default_workers())
    result.write(out)
    if result.failures:
        log.warning("%d repetition(s) failed; see summary.json", len(result.failures))


def _out_dir(path):
    try:
        Path(path).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"cannot create {path}: {exc.strerror}") from None
    return Path(path)


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "bench": cmd_bench}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        level = logging.WARNING - 10 * min(args.verbose, 2)
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc.kind}: {_one_line(str(exc))}", file=sys.stderr)
        return 2 if exc.kind == "usage" else 1
    except FileNotFoundError as exc:
        print(f"error: file-not-found: {_one_line(str(exc.filename or exc))}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {_one_line(str(exc))}", file=sys.stderr)
        return 1
    return 0


def _one_line(text):
    return " ".join(text.split())


if __name__ == "__main__":
    sys.exit(main())
