class SinnError(Exception):
    """Base class for every error raised by the solver app."""


class ConfigurationError(SinnError, ValueError):
    pass


class QuadratureError(SinnError, ValueError):
    pass


class GeometryError(SinnError, ValueError):
    pass


class ProblemDefinitionError(SinnError, ValueError):
    pass


class MetricError(SinnError, ValueError):
    pass


class CheckpointError(SinnError):
    pass


class NonFiniteError(SinnError, ArithmeticError):
    """A residual, network output or gradient went NaN/inf.

    ``point_index`` and ``node`` locate the first offending entry when known.
    """

    def __init__(self, message, point_index=None, node=None):
        self.point_index = point_index
        self.node = node
        where = []
        if point_index is not None:
            where.append(f"point {point_index}")
        if node is not None:
            where.append(f"node {node}")
        if where:
            message = f"{message} (at {', '.join(where)})"
        super().__init__(message)
