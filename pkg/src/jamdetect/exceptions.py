"""Exception types raised across the package."""


class ArgumentError(ValueError):
    """An argument is outside its valid domain."""


class ShapeError(ValueError):
    """Array shapes do not agree, or a cache does not match its inputs."""


class ConfigError(ValueError):
    """A configuration is inconsistent or incomplete."""


class NumericError(FloatingPointError):
    """A non-finite value appeared where finite values are required."""


class FormatError(ValueError):
    """A file is truncated, corrupted or not in the expected format."""


class VersionError(FormatError):
    """A file was written with an unsupported format version."""
