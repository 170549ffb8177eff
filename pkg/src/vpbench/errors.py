"""Exception hierarchy shared across the harness.

``UsageError`` maps to CLI exit code 1, ``DataError`` to exit code 2;
anything else escaping a stage is an internal error (exit code 3).
"""


class VpbenchError(Exception):
    """Base class for all harness errors."""


class UsageError(VpbenchError):
    """Bad invocation: unknown flags, missing arguments, invalid config."""


class DataError(VpbenchError):
    """Invalid or inconsistent input data."""


# geometry
class DegenerateCorrespondence(DataError):
    """Point correspondences do not determine a homography."""


class SamplingExhausted(DataError):
    """Rejection sampling failed to produce a convex quadrilateral."""


class PointAtInfinity(DataError):
    """Projective transform sends the point to the line at infinity."""


class SingularMatrix(DataError):
    """Matrix is not invertible."""


class EmptyIntersection(DataError):
    """Clipped polygon has vanishing area."""


class DegeneratePolygon(DataError):
    """Polygon area is too small to operate on."""


# imageops
class CropTooSmall(DataError):
    """Inscribed crop rectangle is below the minimum pixel size."""


class UnsupportedPngVariant(DataError):
    """PNG file uses a variant outside 8-bit gray / RGB."""


class IoError(DataError):
    """File could not be read or written."""


# embedio
class FormatError(DataError):
    """Malformed EMB1 (or other binary) payload.

    Carries ``offset`` when the problem is located at a byte position.
    """

    def __init__(self, reason, offset=None):
        self.reason = reason
        self.offset = offset
        msg = reason if offset is None else f"{reason} (at byte {offset})"
        super().__init__(msg)


# probe / knn
class ShapeMismatch(DataError):
    """Array shapes do not agree."""


class KTooLarge(DataError):
    """Requested more neighbours than available training rows."""


class ZeroBaseline(DataError):
    """Relative decrease is undefined for a zero baseline accuracy."""


# protocols
class InvalidManifest(DataError):
    """Dataset manifest failed validation."""


class MissingEmbedding(DataError):
    """A planned embedding set is absent."""


class InsufficientViews(DataError):
    """Too many objects lack views at the requested azimuths."""


class ClassTooSmall(DataError):
    """A class has too few samples for the requested split."""


class MissingBaseline(DataError):
    """Baseline condition absent for a (dataset, model) cell."""


class EmptyInput(DataError):
    """Aggregation over an empty collection."""


class NotEnoughRows(DataError):
    """Fewer rows than the requested ranking depth."""
