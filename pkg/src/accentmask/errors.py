"""Exception types shared across the package."""


class AccentMaskError(Exception):
    """Base class for all package errors."""


class FormatError(AccentMaskError, ValueError):
    """Malformed file contents (bad magic, version, header or payload)."""


class TruncatedPayloadError(FormatError):
    pass


class TypeMismatchError(FormatError):
    """File is a valid grid container, but of another kind (e.g. SPEC vs SMAP)."""


class UnsupportedFormatError(FormatError):
    pass


class ShapeError(AccentMaskError, ValueError):
    pass


class ValidationError(AccentMaskError, ValueError):
    pass


class StateError(AccentMaskError, RuntimeError):
    pass


class TrainingError(AccentMaskError, RuntimeError):
    pass


class UndefinedRateError(AccentMaskError, ValueError):
    """Error rate requested over an empty reference corpus."""
