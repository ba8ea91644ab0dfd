"""Exception hierarchy shared by all hsp modules.

Every error raised on a contract violation derives from HspError so callers
can catch the library's failures without swallowing programming mistakes.
Plain shape mismatches raise ValueError.
"""

from __future__ import annotations


class HspError(Exception):
    """Base class for all library errors."""


class ValidationError(HspError):
    """Invalid configuration or argument values."""


class FormatError(HspError):
    """Unparseable or invariant-violating input file content."""


class InsufficientDataError(HspError):
    """Not enough observations to perform the requested computation."""


class NoOverlapError(HspError):
    """Date intersection of the given panels is empty."""


class DegenerateSeriesError(HspError):
    """A series is constant over the window where variation is required."""


class DegenerateEmbeddingError(HspError):
    """All embedding rows coincide; the Gram matrix is identically zero."""


class DegenerateVarianceError(HspError):
    """A pseudo-variance needed for inverse-variance weighting is zero."""


class DegenerateInputError(HspError):
    """Fewer than two items where a clustering or split is required."""


class NoCommonDriversError(HspError):
    """Every specific-driver set is empty; the candidate pool is empty."""


class DivergenceError(HspError):
    """Training produced a non-finite loss."""


class NoViableArchitectureError(HspError):
    """No candidate architecture produced a finite fit."""


class InconsistentUniverseError(HspError):
    """Fits or panels disagree on the driver universe they cover."""


class InfeasibleError(HspError):
    """The requested constraint set is empty."""


class BacktestError(HspError):
    """A backtest aborted; the message carries the date and the cause."""
