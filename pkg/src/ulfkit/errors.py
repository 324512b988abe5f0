"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for ordinary argument validation; the classes
here exist so callers (and the CLI exit-code mapping) can tell apart
"your data is degenerate" from "your request is malformed" from
"the numerics gave up".
"""


class FormatError(ValueError):
    """Input file does not conform to the expected layout."""


class DegenerateInputError(ValueError):
    """Input is formally valid but carries no usable information
    (constant series, all-zero spectrum, empty event stream, ...)."""


class SingularMatrixError(ArithmeticError):
    """A linear system or covariance could not be solved, even after
    regularization."""


class FeatureError(ValueError):
    """A requested feature is undefined for the given data
    (e.g. coefficient of variation of a zero-mean series)."""
