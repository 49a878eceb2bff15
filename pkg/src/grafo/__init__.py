"""Conditional independence graphs for mixed data via per-variable random
forests (GRaFo) or LASSO paths (StabLASSO), with Stability Selection error
control and a simulation benchmark."""
from ._backend import name as backend
from .bench import BenchConfig, BenchResult, evaluate, run_bench
from .dataset import (BinaryDataset, Categorical, ColumnType, Continuous, MixedDataset, dichotomize,
                      ingest_csv)
from .forest import ForestModel, ForestParams, fit_forest, grafo_rank, permutation_importance
from .lasso import LassoParams, LassoPath, kkt_residual, lasso_path, stablasso_rank
from .ranking import Edge, RankedEdges, select_top_q
from .simulate import (DagModel, IsingModel, TrueCig, gibbs_sample, moralize, sample_dag_model,
                       sample_data, sample_ising)
from .stability import StabilityParams, StableGraph, compute_q, fp_bound, raw_select, stability_select

__version__ = "0.1.0"

__all__ = [
    "backend", "BenchConfig", "BenchResult", "evaluate", "run_bench",
    "BinaryDataset", "Categorical", "ColumnType", "Continuous", "MixedDataset", "dichotomize", "ingest_csv",
    "ForestModel", "ForestParams", "fit_forest", "grafo_rank", "permutation_importance",
    "LassoParams", "LassoPath", "kkt_residual", "lasso_path", "stablasso_rank",
    "Edge", "RankedEdges", "select_top_q",
    "DagModel", "IsingModel", "TrueCig", "gibbs_sample", "moralize", "sample_dag_model", "sample_data",
    "sample_ising",
    "StabilityParams", "StableGraph", "compute_q", "fp_bound", "raw_select", "stability_select",
]
