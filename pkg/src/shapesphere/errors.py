"""Exception types shared across the package."""


class ShapeSphereError(Exception):
    """Base class for all package errors."""


class CollisionError(ShapeSphereError, ValueError):
    """A configuration with two (or three) coincident bodies was passed where
    the potential or forces are needed."""

    def __init__(self, pair, message=None):
        self.pair = pair
        super().__init__(message or f"collision between bodies {pair}")


class SingularityError(ShapeSphereError, ValueError):
    """Evaluation at a singular point of shape space (cone point or binary ray)."""

    def __init__(self, where, message=None):
        self.where = where
        super().__init__(message or f"singular point: {where}")


class UnsupportedMassesError(ShapeSphereError, ValueError):
    """Operation only defined for equal masses."""


class ConvergenceError(ShapeSphereError, RuntimeError):
    """Iterative solver failed; ``best`` carries the best iterate found."""

    def __init__(self, message, best=None, residual=None):
        self.best = best
        self.residual = residual
        super().__init__(message)


class IntegrationError(ShapeSphereError, RuntimeError):
    pass
