"""Exact constraint-based learning of DAGs, directed mixed graphs and chain graphs.

The public API is organised by module:

``graph``       graph types, classes, moralisation and latent projection
``separation``  d/m/c-separation oracles and minimal-length distances
``citest``      conditioning families, p-value tables and Fisher-z tests
``encoding``    integer-program construction, MPS/LP export, solution import
``solver``      brute force, branch and bound, MILP backends, verification
``metrics``     essential graphs, SHD, separation distance, F1
``simulate``    random graphs and linear-Gaussian data
"""

__version__ = "0.1.0"

from .graph import GraphClass, GraphError, MixedGraph, latent_projection, read_graph, write_graph
from .separation import Criterion, DistanceKind, all_separations, distance, markov_equivalent, separated
from .citest import ConditioningFamily, PValueTable, family_k, fisher_z_test, full_family, run_all_tests
from .encoding import build_program, decode_graph, export, fix_edges, import_solution
from .solver import (
    Solution,
    Status,
    enumerate_class,
    solve,
    solve_bnb,
    solve_bruteforce,
    solve_external,
    solve_milp_backend,
    verify_solution,
)
from .metrics import MarkedGraph, cpdag_from_dag, f1_scores, k_sep_distance, shd
from .simulate import SimConfig, random_admg, random_dag, sample_linear_gaussian

__all__ = [
    "GraphClass", "GraphError", "MixedGraph", "latent_projection", "read_graph", "write_graph",
    "Criterion", "DistanceKind", "all_separations", "distance", "markov_equivalent", "separated",
    "ConditioningFamily", "PValueTable", "family_k", "fisher_z_test", "full_family", "run_all_tests",
    "build_program", "decode_graph", "export", "fix_edges", "import_solution",
    "Solution", "Status", "enumerate_class", "solve", "solve_bnb", "solve_bruteforce",
    "solve_external", "solve_milp_backend", "verify_solution",
    "MarkedGraph", "cpdag_from_dag", "f1_scores", "k_sep_distance", "shd",
    "SimConfig", "random_admg", "random_dag", "sample_linear_gaussian",
]
