"""Exception hierarchy. Each family maps to a CLI exit code."""


class LesionSegError(Exception):
    exit_code = 1


class ConfigError(LesionSegError, ValueError):
    exit_code = 4


class FormatError(LesionSegError, ValueError):
    """Malformed file contents (NIfTI or UNW1)."""

    exit_code = 5


class ValidationError(LesionSegError, ValueError):
    """An operation received arguments violating its contract."""

    exit_code = 6


class InvalidSpacingError(ValidationError):
    pass


class InvalidKindError(ValidationError):
    pass


class InvalidInterpolationError(ValidationError):
    pass


class InvalidParameterError(ValidationError):
    pass


class AlignmentError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class DescriptorError(ValidationError):
    pass


class NumericError(ValidationError):
    pass


class InvalidMaskError(ValidationError):
    pass


class InvalidMetricError(ValidationError):
    pass


class FingerprintError(ValidationError):
    pass


class EnsembleMismatchError(FingerprintError):
    pass


class NiftiError(FormatError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class WeightFormatError(FormatError):
    pass


class MagicError(WeightFormatError):
    pass


class TruncationError(WeightFormatError):
    def __init__(self, layer, message):
        super().__init__(f"{layer}: {message}")
        self.layer = layer


class LayerMismatchError(WeightFormatError):
    pass
