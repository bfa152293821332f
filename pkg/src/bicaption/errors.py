"""Exception hierarchy. Every failure surfaced to callers is a BicaptionError."""


class BicaptionError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(BicaptionError):
    """Operands have incompatible dimensions."""


class ConfigError(BicaptionError):
    """Invalid configuration value or unknown configuration key."""


class VocabError(BicaptionError):
    """Token id outside the vocabulary range."""


class DataError(BicaptionError):
    """Malformed or empty corpus/feature input."""


class TrainingError(BicaptionError):
    """Non-finite gradients or other optimizer-level failures."""


class MetricError(BicaptionError):
    """Invalid metric query (empty candidate, k out of range, ...)."""


class PlanError(BicaptionError):
    """Infeasible augmentation geometry."""


class CheckpointError(BicaptionError):
    """Corrupt, truncated, or mismatched checkpoint file."""
