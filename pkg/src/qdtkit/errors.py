"""Exception taxonomy.

The CLI maps these to exit codes: ConfigError -> 2, SolverError -> 3,
ModelInvalidError -> 4.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration or arguments."""

    exit_code = 2


class SolverError(RuntimeError):
    """Optimization failed or produced an unusable state."""

    exit_code = 3


class InfeasibleProblemError(SolverError):
    """Box and equality constraints admit no feasible point.

    Attributes:
        certificate: dict naming the offending coordinate and the violated
            interval sum, proving infeasibility.
    """

    def __init__(self, message: str, certificate: dict):
        super().__init__(message)
        self.certificate = certificate


class InconsistentStateError(SolverError):
    """Previously reconstructed diagonals violate positivity."""


class ModelInvalidError(ValueError):
    """A physical-model invariant is violated."""

    exit_code = 4


class SeriesTruncationError(ModelInvalidError):
    """Detector series did not converge within the term cap.

    Attributes:
        achieved_bound: certified residual operator-norm bound at abort.
    """

    def __init__(self, message: str, achieved_bound: float):
        super().__init__(message)
        self.achieved_bound = achieved_bound
