"""Exception hierarchy. The CLI maps these onto its exit-code contract."""


class DfsweError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DfsweError):
    """Invalid model or training configuration."""


class DataError(DfsweError):
    """Unusable input data: images, datasets, file formats."""


class ModelError(DfsweError):
    """Corrupt or non-invertible model state, or a bad checkpoint."""


class PlanError(DfsweError):
    """Latent allocation cannot satisfy the request (budget exhausted)."""


class SegmentError(DfsweError):
    """Degenerate latent segment: too short or zero variance."""


class ReceiptError(DfsweError):
    """Receipt inconsistent with the requested extraction."""


class TrainingDiverged(DfsweError):
    """Training hit a non-finite loss; the last good checkpoint is kept."""
