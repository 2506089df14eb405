"""Exception hierarchy shared across the package."""


class ConfigError(ValueError):
    """A configuration is internally inconsistent or does not match weights."""


class EncodeError(ValueError):
    """Codes cannot be packed into the requested rate mode."""


class CorruptStreamError(ValueError):
    """A bitstream or code sequence failed validation while decoding."""


class BadMagicError(CorruptStreamError):
    pass


class UnsupportedVersionError(CorruptStreamError):
    pass


class UnsupportedRateModeError(CorruptStreamError):
    pass


class TruncatedStreamError(CorruptStreamError):
    """Payload shorter (or longer) than the header's frame count implies."""


class NonZeroPaddingError(CorruptStreamError):
    pass


class IndexRangeError(CorruptStreamError):
    pass


class TrainingDivergenceError(FloatingPointError):
    """A loss or validation metric became NaN."""


class SilentClipError(ValueError):
    """A clean clip has zero power; callers should skip it."""
