"""Exception types raised across the toolkit."""


class ASVAttackError(Exception):
    """Base class for all toolkit errors."""


class InvalidWaveformError(ASVAttackError, ValueError):
    pass


class InputTooShortError(ASVAttackError, ValueError):
    pass


class SampleRateMismatchError(ASVAttackError, ValueError):
    pass


class DimensionMismatchError(ASVAttackError, ValueError):
    pass


class NonFiniteGradientError(ASVAttackError, ArithmeticError):
    """Raised when a loss or its input gradient is not finite (e.g. cosine of a zero vector)."""


class NonDifferentiableModelError(ASVAttackError, TypeError):
    pass


class SingleClassError(ASVAttackError, ValueError):
    """EER needs at least one genuine and one impostor trial."""


class CorpusTooSmallError(ASVAttackError, ValueError):
    pass


class TrainingDivergenceError(ASVAttackError, ArithmeticError):
    pass


class LengthMismatchError(ASVAttackError, ValueError):
    pass


class EmptyEnsembleError(ASVAttackError, ValueError):
    pass


class PresetKindError(ASVAttackError, ValueError):
    pass


class DegenerateImpulseResponseError(ASVAttackError, ValueError):
    pass


class PositionOutsideRoomError(ASVAttackError, ValueError):
    pass


class SilenceAnalysisError(ASVAttackError, ValueError):
    """Resynthesis cannot analyse an all-zero signal."""


class InsufficientDataError(ASVAttackError, ValueError):
    pass


class DegenerateFeatureError(ASVAttackError, ValueError):
    pass


class NonUniquePathError(ASVAttackError, ValueError):
    pass


class ConfigError(ASVAttackError, ValueError):
    pass


class ResourceMissingError(ASVAttackError, FileNotFoundError):
    pass


class ModelFormatError(ASVAttackError, ValueError):
    pass


class EmptyInputError(ASVAttackError, ValueError):
    pass
