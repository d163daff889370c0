"""Exception hierarchy shared across the package."""


class StochHeatError(Exception):
    """Base class for every error raised by this package."""


class DegenerateGridError(StochHeatError, ValueError):
    pass


class StabilityError(StochHeatError, ValueError):
    pass


class BoundaryViolationError(StochHeatError, ValueError):
    pass


class KernelDomainError(StochHeatError, ValueError):
    pass


class CoefficientContractError(StochHeatError, ValueError):
    pass


class PairingError(StochHeatError, ValueError):
    """A trajectory and a noise realization that did not generate each other."""


class AlignmentError(StochHeatError, ValueError):
    pass


class StrideError(StochHeatError, ValueError):
    pass


class EstimatorError(StochHeatError, ValueError):
    pass


class BlowUpError(StochHeatError, FloatingPointError):
    """Non-finite value produced by the explicit scheme.

    Attributes
    ----------
    step : int
        Time step index ``j`` at which the update produced the bad value.
    cell : int
        Spatial node index ``i``.
    path : int or None
        Path index, when known.
    """

    def __init__(self, step, cell, path=None):
        self.step = int(step)
        self.cell = int(cell)
        self.path = None if path is None else int(path)
        where = f"step {self.step}, cell {self.cell}"
        if self.path is not None:
            where = f"path {self.path}, " + where
        super().__init__(f"non-finite value at {where}")


class ConfigError(StochHeatError, ValueError):
    """Invalid experiment configuration; ``lineno`` is set for parse errors."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
