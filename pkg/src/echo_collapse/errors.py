"""Exception types shared across the package.

The CLI maps them onto process exit codes (2 validation, 3 non-convergence,
4 I/O); ``OSError`` is left as-is for I/O failures.
"""


class ValidationError(ValueError):
    """Malformed input, inconsistent data or an out-of-range parameter."""


class ConvergenceError(RuntimeError):
    """A fit or quadrature did not reach its tolerance."""
