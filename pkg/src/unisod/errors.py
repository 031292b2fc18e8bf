"""Exception types shared across the package."""


class UniSODError(Exception):
    """Base class for all package errors."""


class ContractViolation(UniSODError, ValueError):
    """An operation was called with inputs that break its preconditions."""


class ConfigError(UniSODError, ValueError):
    """Bad or inconsistent configuration (missing directory, unknown key, ...)."""


class DataError(UniSODError, IOError):
    """A data file could not be read or decoded."""


class AccountingError(UniSODError, RuntimeError):
    """Parameter partition is incomplete or names an unknown namespace."""


class TrainingDivergence(UniSODError, RuntimeError):
    """Loss became non-finite during training."""


class CheckpointError(UniSODError, RuntimeError):
    """A checkpoint is unreadable or incompatible with the model."""
