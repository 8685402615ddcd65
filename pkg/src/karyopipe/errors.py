"""Exception types shared across the library.

Every error raised by karyopipe code derives from :class:`KaryoError` so
callers can catch library failures without swallowing programming errors.
"""


class KaryoError(Exception):
    """Base class for all karyopipe errors."""


# --- imaging ---------------------------------------------------------------

class DegenerateHistogram(KaryoError):
    """All pixels share one intensity; no threshold separates two classes."""


class TargetSmallerThanSource(KaryoError):
    """Padding target is smaller than the source image."""


class DimensionMismatch(KaryoError):
    """Two rasters/masks that must share dimensions do not."""


# --- cascade ---------------------------------------------------------------

class NoForeground(KaryoError):
    """Prefilter found no component above the minimum area."""


class EmptySemanticMask(KaryoError):
    """Semantic mask contains no non-background pixel."""


# --- model services --------------------------------------------------------

class EmptyMask(KaryoError):
    """A classification request carried an empty instance mask."""


class UnknownImageId(KaryoError):
    """The oracle has no ground truth registered for this image id."""


# --- synthetic generator ---------------------------------------------------

class PlacementFailure(KaryoError):
    """The canvas cannot fit the requested instances without undeclared contact."""


# --- backend ---------------------------------------------------------------

class UnsupportedFormat(KaryoError):
    """Uploaded bytes are not a TIFF, PNG, or BMP image."""


class CorruptImage(KaryoError):
    """Uploaded bytes claim a supported format but do not decode."""


class MissingPatientId(KaryoError):
    """A record without a parsed patient id cannot join a patient-level split."""


class VersionConflict(KaryoError):
    """expected_version does not match the current annotation-set version."""


class SignedOffImmutable(KaryoError):
    """Signed-off annotation sets reject every edit."""


class UnknownAnnotation(KaryoError):
    """An edit referenced an annotation id absent from the current set."""


class UnknownVersion(KaryoError):
    """Requested annotation-set version does not exist."""


# --- evaluation ------------------------------------------------------------

class AllZeroMargins(KaryoError):
    """A 2x2 contingency table with an all-zero margin has no defined test."""
