"""Exception types shared across modules."""


class SheetError(Exception):
    """Base class for solver errors that abort a run (CLI exit code 3)."""


class FrontTooLarge(SheetError):
    """The lifted front leaves the admissible Jacobian range [1/2, 3/2]."""


class IncompatibleSources(SheetError):
    """Pressure sources violate the solvability condition beyond comp_tol."""


class FrontTooLargeForSolver(SheetError):
    """The perturbation iteration for the pressure did not converge."""


class ConstraintViolated(SheetError):
    """A state's constraint defects exceed the configured tolerance."""


class AnalyticWindowExceeded(SheetError):
    """A Picard iterate left the window where the pressure is solvable."""

    def __init__(self, message: str, iterate: int, time: float):
        super().__init__(message)
        self.iterate = iterate
        self.time = time


class OrderTooHigh(SheetError):
    """Repeated normal differentiation is no longer numerically certified."""


class UndefinedRadius(ValueError):
    """Radius estimate requested for an all-zero spectrum."""


class ValidationError(ValueError):
    """Invalid configuration or parameters (CLI exit code 2)."""


class SnapshotError(ValueError):
    """Malformed, truncated or corrupted snapshot file."""
