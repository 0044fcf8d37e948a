"""
Simulation Errors
Exception hierarchy shared by the dynamics, runner, analysis and CLI layers
"""


class CorridorSimError(Exception):
    """Base class for every error raised by the package"""


class DegenerateGeometryError(CorridorSimError, ValueError):
    """Two particle centres coincide, so the pair direction is undefined"""


class InvalidStateError(CorridorSimError, ValueError):
    """A state violates an arena or particle invariant"""


class StepSizeError(CorridorSimError, ValueError):
    """A particle moved further than one box length in a single (sub)step"""


class SetupError(CorridorSimError):
    """Initial conditions could not be generated"""


class AnalysisError(CorridorSimError, ValueError):
    """An observable or fit is undefined for the given input"""


class MalformedInputError(CorridorSimError, ValueError):
    """An input file could not be parsed; the message names file and line"""

    def __init__(self, path, message: str, line: int = None):
        self.path = str(path)
        self.line = line
        location = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{location}: {message}")
