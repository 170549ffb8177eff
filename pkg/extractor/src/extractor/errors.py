"""Error types for the embedding extractor."""

__all__ = [
    "ExtractorError",
    "HubUnavailable",
    "ChecksumMismatch",
    "DimMismatch",
    "InvalidPlan",
    "UnknownBackend",
    "RefusedOverwrite",
]


class ExtractorError(Exception):
    """Base for all extraction failures."""


class HubUnavailable(ExtractorError):
    """Model weights could not be fetched or loaded."""


class ChecksumMismatch(ExtractorError):
    """Cached weights exist but fail their integrity check."""


class DimMismatch(ExtractorError):
    """Inputs or features disagree with the backend's declared shape."""


class InvalidPlan(ExtractorError):
    """plan.json is missing, malformed, or inconsistent."""


class UnknownBackend(ExtractorError):
    """Requested backend name is not registered."""


class RefusedOverwrite(ExtractorError):
    """Output already exists and --force was not given."""
