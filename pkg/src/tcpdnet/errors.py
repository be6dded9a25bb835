"""Exception types shared across the package."""


class TcpdError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TcpdError, ValueError):
    """Array shapes, dimensions or values violate an operation's contract."""


class ConfigError(TcpdError, ValueError):
    """A configuration cannot be satisfied (e.g. too few training scenes)."""


class DataError(TcpdError, OSError):
    """A file on disk is missing, unreadable or malformed."""


class CheckpointError(TcpdError):
    """Checkpoint version, architecture or pattern does not match."""


class NumericError(TcpdError, ArithmeticError):
    """Training produced a non-finite loss."""
