"""Learned MILP instance generation by masked constraint replacement.

Submodules: ``milp`` and ``mps`` (instances and I/O), ``generators``
(synthetic families), ``nn`` (reverse-mode autodiff), ``gnn`` and ``vae``
(the model), ``pipeline`` (training and generation), ``solver`` (LP/MILP
mini-solver), ``benchmark`` (similarity, hardness, downstream) and ``cli``.
"""

from .milp import (BipartiteGraph, MilpInstance, NormBounds, VarType, dataset_norm_bounds,
                   from_bipartite, to_bipartite)
from .mps import parse_mps, read_mps, write_mps
from .generators import gen_mik, gen_mis, gen_setcover, generate_corpus
from .pipeline import (BetaSchedule, Checkpoint, GenConfig, TrainConfig, generate, generate_many,
                       random_baseline, train)
from .solver import SolverLimits, solve_lp, solve_milp
from .benchmark import compute_stats, hardness_report, similarity_score

__version__ = "0.1.0"

__all__ = [
    "BetaSchedule", "BipartiteGraph", "Checkpoint", "GenConfig", "MilpInstance", "NormBounds",
    "SolverLimits", "TrainConfig", "VarType", "compute_stats", "dataset_norm_bounds",
    "from_bipartite", "gen_mik", "gen_mis", "gen_setcover", "generate", "generate_corpus",
    "generate_many", "hardness_report", "parse_mps", "random_baseline", "read_mps",
    "similarity_score", "solve_lp", "solve_milp", "to_bipartite", "train", "write_mps",
]
