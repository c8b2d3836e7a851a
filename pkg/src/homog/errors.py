"""Exception hierarchy.

Every error carries a ``category`` used by the command line front end to
pick an exit status: config, coverage, solver, statistics or io.
"""


class HomogError(Exception):
    category = "statistics"


class ConfigError(HomogError, ValueError):
    category = "config"


class CoverageError(HomogError, ValueError):
    """A domain is not covered by the extent of a coefficient field."""

    category = "coverage"


class SolverError(HomogError, RuntimeError):
    """An iterative solve did not reach its tolerance."""

    category = "solver"

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CompatibilityError(SolverError, ValueError):
    """Pure Neumann load with nonzero sum."""


class ResolutionError(HomogError, ValueError):
    category = "config"


class PreconditionError(HomogError, ValueError):
    category = "statistics"


class ConsistencyError(HomogError, RuntimeError):
    """Internal cross-checks between two routes to one quantity disagree."""

    category = "statistics"


class LawUnsuitableError(HomogError, ValueError):
    """Quadrature over a marginal law diverged or failed to converge."""

    category = "statistics"


class StudyInconsistencyError(HomogError, RuntimeError):
    category = "statistics"


class OutputError(HomogError, OSError):
    category = "io"
