"""
Error Types
============
One exception per module, all deriving from SegmintError so the CLI can
map any library failure to a non-zero exit status with a diagnostic.
"""


class SegmintError(Exception):
    """Base class for every error raised by the segmint library."""


class ConfigError(SegmintError):
    """Invalid run configuration (names the offending field)."""


class TableError(SegmintError):
    """Schema, CSV parsing, or matrix extraction failure."""


class PreprocessError(SegmintError):
    """Cleaning pipeline failure (duplicates, imputation, encoding, stages)."""


class ClusteringError(SegmintError):
    """Invalid clustering input or parameters."""


class ValidationIndexError(SegmintError):
    """Cluster quality index undefined for the given partition."""


class ProfilingError(SegmintError):
    """PCA, summary, or marker computation failure."""


class PersonalityError(SegmintError):
    """Ratings ingestion, weighting, or group labeling failure."""


class SynthesisError(SegmintError):
    """Synthetic data generation failure."""


class StoreError(SegmintError):
    """Output directory that cannot be safely written or replaced."""
