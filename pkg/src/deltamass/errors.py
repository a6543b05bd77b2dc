"""Exception hierarchy shared by all discretizations and solvers."""


class DeltaMassError(Exception):
    """Base class for library errors."""


class DomainMismatchError(DeltaMassError, ValueError):
    """A field and a quadrature (or operator) live on different discretizations."""


class DomainError(DeltaMassError, ValueError):
    """An argument lies outside the domain of an operation (e.g. area <= 0)."""


class SingularityError(DeltaMassError, ValueError):
    """A kernel was evaluated on its diagonal."""


class MeshQualityError(DeltaMassError, ValueError):
    """The mesh violates a topological or geometric validity requirement."""

    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


class AccuracyError(DeltaMassError):
    """A numerical estimate failed its own consistency check.

    ``estimates`` carries whatever competing values were produced so the
    caller can inspect the disagreement.
    """

    def __init__(self, message, estimates=None):
        super().__init__(message)
        self.estimates = dict(estimates or {})


class LinearSolverError(DeltaMassError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(DeltaMassError):
    """Iteration limit reached; ``state`` holds the best iterate found."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class StepSizeError(DeltaMassError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
