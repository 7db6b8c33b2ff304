"""Exception types shared across the toolkit."""


class MusekitError(Exception):
    """Base class for all toolkit-specific failures."""


class AudioFormatError(MusekitError):
    """Raised for unreadable, malformed, or unsupported audio files."""


class NoBeatsError(MusekitError):
    """Raised when no periodic beat structure is detectable."""


class NoKeyError(MusekitError):
    """Raised when the key cannot be estimated (e.g. silent input)."""


class VerbalizationError(MusekitError, ValueError):
    """Raised when a verbalized beat/chord string cannot be parsed."""
