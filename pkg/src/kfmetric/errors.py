"""Exception types shared across the package.

The CLI maps InputError to exit code 2 and NumericError to exit code 3.
"""


class InputError(ValueError):
    """Bad user input: files, CSV rows, argument ranges, degenerate data."""


class NumericError(RuntimeError):
    """Numerical failure: eigensolver breakdown, zero-width kernels, etc."""
