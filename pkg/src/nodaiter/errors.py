"""Exception hierarchy. Everything derives from :class:`NodaError`."""


class NodaError(Exception):
    pass


class DimensionError(NodaError, ValueError):
    pass


class NonPositiveDenominator(NodaError, ValueError):
    pass


class ParseError(NodaError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(NodaError, ValueError):
    pass


class SolverError(NodaError, RuntimeError):
    """Base for failures inside an iterative solve."""


class SingularBorder(SolverError):
    pass


class NonPositiveSolution(SolverError):
    pass


class PositivityLost(SolverError):
    pass


class DeltaSignError(SolverError):
    pass


class SingularMatrix(NodaError, ValueError):
    pass


class SizeGuard(NodaError, ValueError):
    pass


class NoConvergence(SolverError):
    pass


class DisconnectedGraph(NodaError, RuntimeError):
    pass


class GenerationFailed(NodaError, RuntimeError):
    pass
