"""Exception hierarchy shared by every hyperaod module.

The CLI maps each family onto a stable exit code, so new errors should
subclass one of the three roots below.
"""


class HyperAODError(Exception):
    exit_code = 1


class ConfigError(HyperAODError, ValueError):
    """Inconsistent or invalid configuration (exit code 2)."""

    exit_code = 2


class DataError(HyperAODError):
    """Missing, malformed or unusable input data (exit code 3)."""

    exit_code = 3


class NumericalError(HyperAODError, ArithmeticError):
    """Non-finite losses or other numeric failures (exit code 4)."""

    exit_code = 4


class PackFormatError(DataError):
    pass


class PackMagicError(PackFormatError):
    pass


class PackVersionError(PackFormatError):
    pass


class PackTruncatedError(PackFormatError):
    pass


class PackHeaderError(PackFormatError):
    pass


class CheckpointError(DataError):
    pass
