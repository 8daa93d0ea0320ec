"""Exception types raised across swan_lab."""


class SwanLabError(Exception):
    """Base class for all library errors."""


class ShapeError(SwanLabError, ValueError):
    """Operand dimensions are incompatible."""


class CapacityError(SwanLabError):
    """A dense object would exceed the configured size cap."""


class NumericError(SwanLabError, ArithmeticError):
    """Non-finite values or an iterative routine failed to converge."""

    def __init__(self, message, *, iterations=None, where=None):
        super().__init__(message)
        self.iterations = iterations
        self.where = where


class GraphError(SwanLabError, ValueError):
    """Malformed graph, or a graph violating an algorithm's precondition."""


class DisconnectedGraphError(GraphError):
    """Distance-based oracle asked for a quantity that is infinite."""


class ConfigError(SwanLabError, ValueError):
    """Invalid run configuration."""
