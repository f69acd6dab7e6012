"""Exception hierarchy shared by the numerical and I/O layers."""

import numpy as np


class KronsgpError(Exception):
    """Base class for all package errors."""


class DimensionError(KronsgpError, ValueError):
    """Shapes of the operands do not line up."""


class ConfigError(KronsgpError, ValueError):
    """A configuration, descriptor or schema is invalid."""


class NumericalError(KronsgpError, np.linalg.LinAlgError):
    """A factorization failed or produced unusable values."""


class NotPSDError(NumericalError):
    """A matrix expected to be positive semi-definite is not.

    Attributes
    ----------
    min_eigenvalue : float
        The most negative eigenvalue encountered.
    """

    def __init__(self, message, min_eigenvalue):
        super().__init__(message)
        self.min_eigenvalue = float(min_eigenvalue)


class JitterError(NumericalError):
    """Cholesky failed even after the maximum diagonal jitter."""

    def __init__(self, message, jitter):
        super().__init__(message)
        self.jitter = float(jitter)


class IncompleteProductError(ConfigError):
    """Long-format rows do not cover a Cartesian product exactly once."""
