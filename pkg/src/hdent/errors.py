"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class HdentError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(HdentError, ValueError):
    pass


class InvalidStateError(HdentError, ValueError):
    """A matrix or vector failed Hermiticity/trace/positivity/normalization checks."""


class IncompleteBasisError(HdentError, ValueError):
    """A tilted basis was requested for a spectrum with vanishing entries."""


class NumericalError(HdentError, ArithmeticError):
    """Ill-conditioned or singular linear algebra (e.g. loss-correction matrix)."""


class DataFormatError(HdentError, ValueError):
    """Malformed or inconsistent input data (JSON/CSV tables, empty tables)."""


class UnsupportedModeError(HdentError, ValueError):
    pass
