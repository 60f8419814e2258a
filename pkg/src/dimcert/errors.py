"""Exception hierarchy shared by all modules.

The CLI maps each family to its own exit code.
"""


class DimcertError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class InputError(DimcertError, ValueError):
    """Malformed or inconsistent user-supplied data (files, labels, matrices)."""

    exit_code = 2


class ParameterError(InputError):
    """A scalar parameter is outside its admissible range."""


class ProtocolError(DimcertError):
    """Unsupported protocol (e.g. even dimension) or a broken protocol invariant."""

    exit_code = 3


class NumericalError(DimcertError, ArithmeticError):
    """An internal solver failed (infeasible/unbounded LP, non-convergence)."""

    exit_code = 4
