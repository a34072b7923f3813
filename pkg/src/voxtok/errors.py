"""Exception types shared across the package."""


class VoxtokError(Exception):
    """Base class for all package-specific errors."""


class PoseInvalid(VoxtokError):
    """Rotation is not orthonormal with determinant +1 within tolerance."""


class ShapeMismatch(VoxtokError):
    """Array shapes are inconsistent with each other or with a tiling."""


class EmptyCell(VoxtokError):
    """A selection rule was applied to an empty voxel cell."""


class BadRatio(VoxtokError):
    """Keep ratio outside the accepted (0, 1] interval."""


class LengthMismatch(VoxtokError):
    """Mask sequences do not share a common token count."""


class NonMonotonicFrame(VoxtokError):
    """Frame ids must advance by exactly one."""


class NonFinite(VoxtokError):
    """A numeric input or intermediate is NaN or infinite."""


class ScaleExceeded(VoxtokError):
    """Input is larger than the reference enumerator is willing to process."""


class WaypointOutOfBounds(VoxtokError):
    """A trajectory waypoint lies outside the scene's free space."""


class NoRunData(VoxtokError):
    """An export was requested from a directory without run outputs."""


class ConfigError(VoxtokError):
    """Configuration file is malformed or violates a constraint."""


class LogFormatError(VoxtokError):
    """A trajectory log, manifest, or tensor bundle failed to parse."""


class InvariantViolation(VoxtokError):
    """An internal invariant check failed; the message names the invariant."""
