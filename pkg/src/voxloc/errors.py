"""Exception types shared across the package."""


class VoxlocError(Exception):
    """Base class for all voxloc errors."""


# --- geometry ---

class NonPositiveDepthError(VoxlocError):
    """Projection or unprojection requested at depth <= 0."""


class PixelOutOfBoundsError(VoxlocError):
    """Pixel coordinate outside the image rectangle."""


# --- field / images ---

class DimensionMismatchError(VoxlocError):
    """Two images (or arrays) that must share a shape do not."""


class FieldFormatError(VoxlocError):
    """Base for malformed field files."""


class BadMagicError(FieldFormatError):
    """Field file does not start with the expected magic bytes."""


class VersionUnsupportedError(FieldFormatError):
    """Field file version not understood by this build."""


class ChecksumMismatchError(FieldFormatError):
    """Field file payload does not match its trailing CRC32."""


class EmptyDatasetError(VoxlocError):
    """Training or filtering asked to run on too few images."""


class DegenerateBoundsError(VoxlocError):
    """All dataset cameras sit at a single point."""


# --- synthetic data ---

class EmptySceneError(VoxlocError):
    """Scene has no primitives to voxelize."""


class BadParamsError(VoxlocError):
    """Trajectory parameters are inconsistent for the requested kind."""


class TooSmallError(VoxlocError):
    """Image too small for the requested operation."""


class AllFilteredError(VoxlocError):
    """Blur filter removed every image; threshold too aggressive."""


# --- localization ---

class BadCountError(VoxlocError):
    """Requested a non-positive number of reference poses."""


class EmptyDatabaseError(VoxlocError):
    """Image database holds no entries."""


class NoDepthError(VoxlocError):
    """2D-3D lifting requires a reference with rendered depth."""


class InsufficientCorrespondencesError(VoxlocError):
    """Fewer than four 2D-3D correspondences supplied."""


class InsufficientMatchesError(VoxlocError):
    """Fewer than eight 2D-2D matches supplied."""


class DegenerateError(VoxlocError):
    """Solver input is degenerate (e.g. collinear sample points)."""


class NoConsensusError(VoxlocError):
    """RANSAC found no model with enough inliers."""


# --- evaluation ---

class NoPairsError(VoxlocError):
    """Timestamp association produced no pairs."""


# --- configuration ---

class ConfigError(VoxlocError):
    """Run configuration file is malformed; message names file and key."""
