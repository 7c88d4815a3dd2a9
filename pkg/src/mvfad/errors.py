"""Exception types shared across the package."""


class NumericDegeneracyError(ValueError):
    """A zero-norm embedding or similar degenerate numeric input."""


class TrainingDivergedError(RuntimeError):
    """A loss term became non-finite during optimization."""


class UndefinedMetricError(ValueError):
    """A metric was requested on data where it is undefined (e.g. one class)."""


class CheckpointError(ValueError):
    """Base class for checkpoint file problems."""


class ChecksumMismatchError(CheckpointError):
    """Stored integrity checksum does not match the file contents."""


class VersionMismatchError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""
