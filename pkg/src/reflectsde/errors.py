"""Exception types shared across the package."""


class ReflectSDEError(Exception):
    """Base class for all package errors."""


class OutOfReach(ReflectSDEError):
    """A point is too far outside the domain for a unique closest point."""


class NotOnBoundary(ReflectSDEError):
    pass


class OutsideDomain(ReflectSDEError):
    pass


class DegenerateCone(ReflectSDEError):
    """Cone normals contain an antipodal pair (empty interior)."""


class OutOfHorizon(ReflectSDEError):
    pass


class EmptyWindow(ReflectSDEError):
    pass


class NoConvergence(ReflectSDEError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularPoint(ReflectSDEError):
    pass


class InsufficientSamples(ReflectSDEError):
    pass


class DegenerateWindow(ReflectSDEError):
    pass


class ParseError(ReflectSDEError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ValidationError(ReflectSDEError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
