"""Block-structured edge-triangle exponential random graph models.

Exact finite-n Gibbs computations, the limiting free energy through its
finite-dimensional fixed-point problem, step-graphon metrics and densities,
and Glauber-dynamics verification of the edge-density law of large numbers.
"""

from .blockmodel import (ColoredGraph, FinitePartition, LimitPartition,
                         ModelParams, block_edge_counts,
                         block_triangle_counts, build_finite_partition,
                         discrete_cell_densities, hamiltonian,
                         load_colored_graph, save_colored_graph)
from .errors import (ConfigError, InvariantFailure, NonConvergenceError,
                     ResourceLimitError)
from .exact import (ExactResult, log_partition_enumerate,
                    log_partition_factorized, scaled_cgf)
from .graphon import (CutNormResult, StepGraphon, StepKernel, block_graphon,
                      cell_density, checkerboard, colored_cut_distance,
                      cut_norm, discretization_bounds, entropy_functional,
                      graphon_from_json, graphon_to_json,
                      interaction_functional, triangle_operator)
from .sampler import (ChainConfig, ChainTrace, LLNReport,
                      conditional_flip_energy, lln_experiment, run_chain)
from .variational import (BlockMatrix, HolderCertificate, SolveReport,
                          SolverOptions, el_residual, fixed_point_map,
                          holder_certificate, lipschitz_bound, objective,
                          objective_gradient, predicted_edge_density,
                          solve_fixed_point)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
