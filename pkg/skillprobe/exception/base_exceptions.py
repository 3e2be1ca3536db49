"""
skillprobe Base Exception Classes
"""

from typing import Optional


class SkillProbeException(Exception):
    """Base exception for all skillprobe errors"""

    def __init__(self, message: str, error_code: str = "SKILLPROBE_ERROR"):
        self.message = message
        self.error_code = error_code
        super().__init__(f"[{error_code}] {message}")


class ConfigException(SkillProbeException):
    """Exception for configuration-related errors"""

    def __init__(self, message: str, error_code: str = "CONFIG_ERROR"):
        super().__init__(message, error_code)


class ConfigValidationException(ConfigException):
    """Exception for config files rejected before any compute"""

    def __init__(self, message: str, error_code: str = "CONFIG_VALIDATION_ERROR"):
        super().__init__(message, error_code)


class ShapeException(SkillProbeException):
    """Exception for tensor shape mismatches"""

    def __init__(self, message: str, error_code: str = "SHAPE_ERROR"):
        super().__init__(message, error_code)


class NumericalException(SkillProbeException):
    """Exception for non-finite values"""

    def __init__(self, message: str, error_code: str = "NUMERICAL_ERROR"):
        super().__init__(message, error_code)


class ModelStateException(SkillProbeException):
    """Exception for calls made in the wrong model state (e.g. backward without forward)"""

    def __init__(self, message: str, error_code: str = "MODEL_STATE_ERROR"):
        super().__init__(message, error_code)


class VocabException(SkillProbeException):
    """Exception for token ids outside the vocabulary"""

    def __init__(self, message: str, error_code: str = "VOCAB_ERROR"):
        super().__init__(message, error_code)


class LengthException(SkillProbeException):
    """Exception for sequences longer than the position table"""

    def __init__(self, message: str, error_code: str = "LENGTH_ERROR"):
        super().__init__(message, error_code)


class FormatException(SkillProbeException):
    """Exception for unreadable artifact files (bad magic, version, header)"""

    def __init__(self, message: str, error_code: str = "FORMAT_ERROR"):
        super().__init__(message, error_code)


class TruncatedFileException(FormatException, IOError):
    """Exception for artifact files that end before their declared payload"""

    def __init__(self, message: str, error_code: str = "TRUNCATED_FILE"):
        super().__init__(message, error_code)


class InputException(SkillProbeException):
    """Exception for empty or unusable input data"""

    def __init__(self, message: str, error_code: str = "INPUT_ERROR"):
        super().__init__(message, error_code)


class ParseException(InputException):
    """Exception for malformed input lines"""

    def __init__(self, message: str, line_number: Optional[int] = None, error_code: str = "PARSE_ERROR"):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message, error_code)


class ValidationException(SkillProbeException):
    """Exception for validation errors"""

    def __init__(self, message: str, error_code: str = "VALIDATION_ERROR"):
        super().__init__(message, error_code)


class ContractException(ValidationException):
    """Exception for violated operation preconditions"""

    def __init__(self, message: str, error_code: str = "CONTRACT_ERROR"):
        super().__init__(message, error_code)


class DependencyException(SkillProbeException):
    """Exception for pipeline stages started before their upstream stage"""

    def __init__(self, message: str, required_command: str, error_code: str = "DEPENDENCY_ERROR"):
        self.required_command = required_command
        super().__init__(f"{message} (run `skillprobe {required_command}` first)", error_code)


class ProcessingException(SkillProbeException):
    """Exception for processing pipeline errors"""

    def __init__(self, message: str, error_code: str = "PROCESSING_ERROR"):
        super().__init__(message, error_code)
