"""Exceptions for the stereo super-resolution engine."""


class StereoSrError(Exception):
    """Error raised by the stereo super-resolution engine."""


class ShapeMismatchError(StereoSrError):
    """Raised when tensor extents or ranks violate an operation's contract."""


class ValueRangeError(StereoSrError):
    """Raised when values fall outside the range an operation accepts."""


class ImageFormatError(StereoSrError):
    """Raised when an image file cannot be read or is not 8-bit RGB."""


class ArchiveError(StereoSrError):
    """Raised due to a malformed or incompatible weight archive."""


class SceneSpecError(StereoSrError):
    """Raised when a synthetic scene description is invalid."""


class ConfigError(StereoSrError):
    """Raised when command line arguments or environment settings are invalid."""
