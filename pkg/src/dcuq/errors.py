"""Exception types raised across the package."""


class DcuqError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DcuqError, ValueError):
    pass


class UnsupportedOperationError(DcuqError, NotImplementedError):
    pass


class DegenerateBandwidthError(DcuqError, ValueError):
    """Silverman's rule produced a zero bandwidth (all samples identical)."""


class CoverageError(DcuqError, ValueError):
    """Sparse-grid evaluations do not match the required point set.

    Attributes
    ----------
    missing, extra : list
        Offending points.
    """

    def __init__(self, missing, extra):
        self.missing = list(missing)
        self.extra = list(extra)
        super().__init__(
            f"sparse grid coverage mismatch: {len(self.missing)} missing "
            f"{self.missing[:5]}, {len(self.extra)} extra {self.extra[:5]}"
        )


class DomainError(DcuqError, ValueError):
    pass


class ConfigError(DcuqError, ValueError):
    pass


class DivergenceError(DcuqError, ArithmeticError):
    """A forward model produced non-finite output.

    Attributes
    ----------
    time : float or None
        Simulation time at which the state became non-finite.
    indices : list of int
        Sample indices whose evaluation failed.
    """

    def __init__(self, message, time=None, indices=()):
        self.time = time
        self.indices = list(indices)
        super().__init__(message)


class IncompatibleEstimateError(DcuqError, ValueError):
    pass


class PredictabilityError(DcuqError):
    """The push-forward cannot predict the observed density.

    Attributes
    ----------
    q : float
        First offending QoI value.
    """

    def __init__(self, message, q=None):
        self.q = q
        super().__init__(message)


class EmptyPosteriorError(DcuqError, ValueError):
    pass
