"""Exception and warning classes.

Every error raised on purpose by the package derives from :class:`PairStatsError`,
and carries an ``exit_code`` used by the command-line front end.
"""


class PairStatsError(Exception):
    exit_code = 3


class InvalidParameterError(PairStatsError, ValueError):
    """A parameter lies outside its physical domain."""

    exit_code = 1


class ParseError(PairStatsError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(PairStatsError, ArithmeticError):
    """A numerical inversion failed or has no solution in range."""

    exit_code = 3


class TruncationError(SolverError):
    pass


class UndefinedQuantityError(SolverError):
    """A ratio is undefined because its denominator vanishes."""


class SimulationBudgetError(SolverError):
    pass


class ModelConsistencyError(PairStatsError):
    """Data disagree with the single-pair model beyond statistical error."""

    exit_code = 4


class ModelConsistencyWarning(UserWarning):
    """Non-fatal model-consistency issue; escalated to an error by ``--strict``."""


class ScanRangeWarning(UserWarning):
    """A root lies outside the scanned range; informational only."""
