"""Exception types raised across the package.

Everything derives from :class:`EbshrinkError` so callers (and the CLI) can
catch one base class for expected failures and let genuine bugs propagate.
"""


class EbshrinkError(Exception):
    """Base class for all errors raised by this package."""


class BadShape(EbshrinkError):
    """An array argument has the wrong dimensions for the operation."""


class NonFinite(EbshrinkError):
    """An input contains NaN or infinity where finite values are required."""


class RankDeficient(EbshrinkError):
    """A design (or sub-design) is numerically rank deficient."""


class DegenerateResponsibilities(EbshrinkError):
    """All mixture responsibility mass collapsed onto the null component."""


class DegenerateLabels(EbshrinkError):
    """A label vector lacks both classes, so ranking metrics are undefined."""


class BadConfig(EbshrinkError):
    """A simulation or fitting configuration fails validation."""


class FoldTooSmall(EbshrinkError):
    """Cross-validation folds would leave too few rows to fit the model."""


class ParseError(EbshrinkError):
    """A delimited text file is malformed.

    Parameters
    ----------
    message : str
        Human-readable description.
    row, col : int, optional
        One-based position of the offending cell, when known.
    """

    def __init__(self, message, row=None, col=None):
        self.row = row
        self.col = col
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {col})" if col is not None else ")")
        super().__init__(message + where)


class NaInCovariates(ParseError):
    """An NA appeared in a matrix that must be fully observed."""
