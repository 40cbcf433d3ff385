"""Exception hierarchy shared by every module in the package."""


class SpeechGradeError(Exception):
    """Base class for all errors raised by speechgrade."""


class DimensionError(SpeechGradeError, ValueError):
    """Operand shapes are incompatible."""


class DegenerateInputError(SpeechGradeError, ValueError):
    """Input is empty or too small for the requested operation."""


class ParameterError(SpeechGradeError, ValueError):
    """A scalar parameter is outside its allowed range."""


class ContractError(SpeechGradeError, ValueError):
    """A caller-side precondition was violated."""


class NumericError(SpeechGradeError, ArithmeticError):
    """Non-finite or out-of-domain numeric values."""


class UndefinedKappaError(NumericError):
    """Weighted kappa has a zero expected-disagreement denominator."""


class FormatError(SpeechGradeError, ValueError):
    """A file does not follow the expected on-disk format."""


class ParseError(FormatError):
    """A line-oriented file contains a malformed line."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
