"""Coarse-grained coefficients of random checkerboard media.

Finite-element computation of the subadditive energy ``mu``, its dual
``mu*`` and the defect ``J`` on triadic cubes, Monte Carlo estimation of the
homogenized matrix and its convergence, and the homogenization error of
Dirichlet problems with oscillating coefficients.
"""
from .cell import CellProblem, QuadraticReport, matrices, verify_lemma_properties
from .errors import (ConfigError, ConsistencyError, CoverageError, HomogError, LawUnsuitableError,
                     OutputError, ResolutionError, SolverError, StudyInconsistencyError)
from .field import (CheckerboardField, MarginalLaw, PiecewiseField, TriadicCube, lambda_extremes,
                    sample_field, sample_seed)
from .grid import Grid, GridFunction, assemble_stiffness, solve_dirichlet, solve_neumann_free

__version__ = "0.1.0"

__all__ = [
    "CellProblem", "QuadraticReport", "matrices", "verify_lemma_properties",
    "ConfigError", "ConsistencyError", "CoverageError", "HomogError", "LawUnsuitableError", "OutputError",
    "ResolutionError", "SolverError", "StudyInconsistencyError",
    "CheckerboardField", "MarginalLaw", "PiecewiseField", "TriadicCube", "lambda_extremes", "sample_field",
    "sample_seed",
    "Grid", "GridFunction", "assemble_stiffness", "solve_dirichlet", "solve_neumann_free",
]
