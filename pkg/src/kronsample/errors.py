"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An input violates a documented precondition."""


class SingularGeometryError(InvalidArgumentError):
    """Scatterer coincides with an array element; derivatives are undefined."""


class SingularFimError(RuntimeError):
    """Fisher matrix is numerically singular even after diagonal regularization."""


class NumericalFailureError(RuntimeError):
    """A non-finite value appeared inside an iterative computation."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ResourceLimitError(RuntimeError):
    """Problem size exceeds the configured guard for the flat baseline."""


class EvaluationError(RuntimeError):
    """No usable result could be produced (e.g. every scatterer was singular)."""
