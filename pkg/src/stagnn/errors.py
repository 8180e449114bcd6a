"""Exception types shared across the package."""


class StagnnError(Exception):
    """Base class for all library errors."""


class GraphBuildError(StagnnError):
    """Malformed edge input (out-of-range indices, bad file contents)."""


class ShapeError(StagnnError):
    """Operand shapes incompatible with the requested operation."""


class ConfigError(StagnnError):
    """Invalid or inconsistent configuration."""


class DataFormatError(StagnnError):
    """Dataset file failed to parse or is internally inconsistent."""


class CheckpointError(StagnnError):
    """Checkpoint file is corrupt or does not match the expected format."""


class NumericsError(StagnnError):
    """A numerical invariant was violated (NaN/Inf, failed cross-check)."""


class DivergenceError(NumericsError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite training loss at epoch {epoch}")
