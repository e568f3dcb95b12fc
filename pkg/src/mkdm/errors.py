"""Exception taxonomy shared across the package."""


class MkdmError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(MkdmError, ValueError):
    """Operands have incompatible shapes."""


class ContractError(MkdmError, ValueError):
    """A caller violated an operation's precondition."""


class ConfigError(MkdmError, ValueError):
    """A configuration value or combination is invalid."""


class DataError(MkdmError, ValueError):
    """A dataset or cache file failed validation."""


class VocabMismatchError(DataError):
    """A model was asked to score text encoded with a different vocabulary."""


class MetricUndefinedError(MkdmError, ValueError):
    """The requested metric is undefined on this input (e.g. single-class AUC)."""


class CheckpointError(MkdmError, ValueError):
    """A checkpoint file could not be read."""


class BadMagicError(CheckpointError):
    """The file does not start with the checkpoint magic bytes."""


class UnsupportedVersionError(CheckpointError):
    """The checkpoint format version is not one this code can read."""


class TruncatedCheckpointError(CheckpointError):
    """The file ended before the declared content was complete."""
