"""Noda-type iterations for the smallest eigenpair of irreducible monotone matrices.

>>> from nodaiter import laplacian_2d, run_ini
>>> sigma, x, trace = run_ini(laplacian_2d(15))
"""
from nodaiter._kernels import BACKEND
from nodaiter.errors import NodaError
from nodaiter.krylov import InnerConfig, solve_bordered, solve_general, solve_symmetric
from nodaiter.noda import (
    ConvergenceTrace,
    RelaxationStrategy,
    SolverConfig,
    StepRecord,
    m_matrix_split,
    run_ini,
    run_mini,
    run_mni,
    run_ni,
    solve,
)
from nodaiter.problems import ProblemSpec, build, graph_m_matrix, laplacian_2d, m_product
from nodaiter.sparse import SparseMatrix, augment, read_matrix_market, write_matrix_market

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "NodaError",
    "InnerConfig",
    "solve_symmetric",
    "solve_general",
    "solve_bordered",
    "ConvergenceTrace",
    "RelaxationStrategy",
    "SolverConfig",
    "StepRecord",
    "m_matrix_split",
    "run_ini",
    "run_mini",
    "run_mni",
    "run_ni",
    "solve",
    "ProblemSpec",
    "build",
    "graph_m_matrix",
    "laplacian_2d",
    "m_product",
    "SparseMatrix",
    "augment",
    "read_matrix_market",
    "write_matrix_market",
]
