"""Exception hierarchy for the solver toolkit."""


class NpasaError(Exception):
    """Base class for every error raised by this package."""


class DomainError(NpasaError, ValueError):
    """Arguments lie outside the domain of an estimator or operation."""


class ProblemFormatError(NpasaError, ValueError):
    """A problem file could not be parsed or violates an invariant.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending entry, when known.
    field : str or None
        Name of the offending field, when known.
    """

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.line = line
        self.field = field


class InfeasibleError(NpasaError):
    """The polyhedron is empty."""


class SubsolverFailure(NpasaError):
    """An inner solver stopped without meeting its optimality test."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class EvaluationError(NpasaError, FloatingPointError):
    """A user evaluator produced NaN or a wrongly shaped value."""


class InternalError(NpasaError, RuntimeError):
    """An internal consistency check failed."""
