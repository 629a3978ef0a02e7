"""Exception types shared by the solver modules and the harness."""

import numpy as np


class SubarrayEEError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(SubarrayEEError, ValueError):
    """An argument is out of range or has inconsistent dimensions."""


class NumericFailureError(SubarrayEEError, ArithmeticError):
    """A numerical routine could not produce a usable result."""


class SingularMatrixError(NumericFailureError, np.linalg.LinAlgError):
    """A matrix that must be inverted (or whitened) is singular."""


class OutputError(SubarrayEEError, OSError):
    """Writing or reading a result file failed."""
