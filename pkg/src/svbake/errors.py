"""Exception types shared across the package."""


class SvbakeError(Exception):
    """Base class for all svbake errors."""


class UnsupportedFormatError(SvbakeError):
    """File extension or encoding not handled by the image codecs."""


class CorruptImageError(SvbakeError):
    """File exists but its header or payload cannot be decoded."""


class RangeError(SvbakeError):
    """Sample values outside the range allowed by the target encoding."""


class ColorspaceError(SvbakeError):
    """Operation applied to an image with the wrong colorspace tag."""


class MeshParseError(SvbakeError):
    """Malformed record in a mesh file."""


class MissingUVError(MeshParseError):
    """A face has no texture coordinates; atlas operations need them."""


class ConfigError(SvbakeError):
    """Invalid pipeline configuration (bad field, missing path)."""
