"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the CLI uses
for its one-line error report and to pick the exit status.
"""


class MitargetError(Exception):
    category = "error"
    exit_code = 1


class InputError(MitargetError, ValueError):
    """Malformed, inconsistent or out-of-range input."""

    category = "input-error"
    exit_code = 2


class NumericError(MitargetError, ArithmeticError):
    """A numerical step could not be carried out."""

    category = "numeric-error"
    exit_code = 3


class SingularBackgroundError(NumericError):
    category = "singular-background"


class DegenerateSignatureError(NumericError):
    """The candidate signature coincides with the background mean."""

    category = "degenerate-signature"


class InitializationError(NumericError):
    category = "initialization-error"
