"""Exception types shared across the package."""


class QtrajError(Exception):
    """Base class for all package-specific failures."""


class OutOfRangeError(QtrajError, ValueError):
    """A query point lies outside the tabulated/sampled domain."""


class DivergenceError(QtrajError, RuntimeError):
    """A fixed-step integration blew past the overflow guard."""


class SingularityError(QtrajError, ValueError):
    """A pointwise operation hit a forbidden zero (W' = 0, W_EE = 0, ...)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DegenerateMicrostateError(QtrajError, ValueError):
    """Mixing coefficients with ad - bc = 0."""
