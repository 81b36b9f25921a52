"""Bipartite-graph random-walk recommendation engine.

Subpackages: graph store and binary format (graph), walk engine (walk,
counter), raw-input compiler with pruning (compiler), synthetic graph
generator (synth), experiment harness (evals), HTTP service (server),
command line (cli).
"""

from .counter import VisitCounter
from .graph import BipartiteGraph, ValidationReport, load_binary, save_binary
from .rng import RandomSource, derive_seed
from .walk import (
    RankedResult,
    WalkConfig,
    WalkStats,
    WeightedQuery,
    allocate_steps,
    basic_random_walk,
    combine_counts,
    pixie_random_walk,
    pixie_random_walk_multiple,
    sample_walk_length,
    scaling_factor,
    top_k,
)

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "RandomSource",
    "RankedResult",
    "ValidationReport",
    "VisitCounter",
    "WalkConfig",
    "WalkStats",
    "WeightedQuery",
    "allocate_steps",
    "basic_random_walk",
    "combine_counts",
    "derive_seed",
    "load_binary",
    "pixie_random_walk",
    "pixie_random_walk_multiple",
    "sample_walk_length",
    "save_binary",
    "scaling_factor",
    "top_k",
    "__version__",
]
