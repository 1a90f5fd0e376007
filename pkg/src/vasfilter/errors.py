"""Exception hierarchy shared by every module.

Each exception carries the process exit code the CLI maps it to:
1 for I/O trouble, 2 for validation failures, 3 for numerical failures.
"""

from __future__ import annotations


class VasError(Exception):
    exit_code = 2

    def __init__(self, message: str = "", **context):
        self.context = context
        super().__init__(message or self.__class__.__name__)

    def __str__(self) -> str:
        msg = super().__str__()
        name = self.__class__.__name__
        return msg if msg.startswith(name) else f"{name}: {msg}"


class ValidationError(VasError):
    exit_code = 2


class NumericalError(VasError):
    exit_code = 3


class IoFailure(VasError, OSError):
    exit_code = 1


# embstore
class BadMagic(ValidationError):
    pass


class VersionMismatch(ValidationError):
    pass


class TruncatedPayload(ValidationError):
    pass


class ZeroNormRow(ValidationError):
    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"row {index} has norm < 1e-12", index=index)


class DimensionOverflow(ValidationError):
    pass


class InvalidShape(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class IdMismatch(ValidationError):
    def __init__(self, position: int, message: str = ""):
        self.position = position
        super().__init__(message or f"ids differ at position {position}", position=position)


class DimMismatch(ValidationError):
    pass


# scoring
class NotNormalized(ValidationError):
    pass


# selection / optdesign
class KOutOfRange(ValidationError):
    pass


class TargetExceedsStage1(ValidationError):
    pass


class TargetExceedsInput(ValidationError):
    pass


class TauZero(ValidationError):
    pass


class EmptySelection(ValidationError):
    pass


class MissingIds(ValidationError):
    pass


class SingularDowndate(NumericalError):
    pass


# theorysim
class ConfigInvalid(ValidationError):
    pass


class SubsetTooSmall(ValidationError):
    pass


class EmptyTest(ValidationError):
    pass


class DegenerateClasses(ValidationError):
    pass


class CombinatorialBlowup(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class DegenerateSpectrum(NumericalError):
    pass
