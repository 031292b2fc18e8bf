"""Unified salient object detection: an RGB baseline adapted to RGB-D and
RGB-T inputs by learning per-level switchable prompts on a frozen model."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AccountingError,
    CheckpointError,
    ConfigError,
    ContractViolation,
    DataError,
    TrainingDivergence,
)
from .model import ModelConfig, UniSOD  # noqa: F401
