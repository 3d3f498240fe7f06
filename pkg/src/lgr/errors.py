"""Exception hierarchy shared by the library and the command line front end.

Every class carries an ``exit_code`` so the CLI can map failures onto stable
process return codes without a lookup table.
"""


class LGRError(Exception):
    exit_code = 1


class UsageError(LGRError, ValueError):
    """Bad arguments: shape mismatch, non-finite values, out-of-range indices."""

    exit_code = 2


class ConfigError(LGRError, ValueError):
    """One or more configuration keys failed validation.

    ``problems`` lists every violation, not just the first one.
    """

    exit_code = 3

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class DataError(LGRError, ValueError):
    """Input file missing, unreadable or malformed."""

    exit_code = 4


class NumericalError(LGRError, ArithmeticError):
    """A linear system could not be factored."""

    exit_code = 5


class EmptyModelError(LGRError, RuntimeError):
    """Prediction was requested from a model with no local models."""

    exit_code = 6


class ModelFileError(LGRError, ValueError):
    """A serialized model is missing, has the wrong version/type, or does not match the data."""

    exit_code = 7
