"""
skillprobe Exception Module
"""

from .base_exceptions import (
    ConfigException,
    ConfigValidationException,
    ContractException,
    DependencyException,
    FormatException,
    InputException,
    LengthException,
    ModelStateException,
    NumericalException,
    ParseException,
    ProcessingException,
    ShapeException,
    SkillProbeException,
    TruncatedFileException,
    ValidationException,
    VocabException,
)

__all__ = [
    "SkillProbeException",
    "ConfigException",
    "ConfigValidationException",
    "ShapeException",
    "NumericalException",
    "ModelStateException",
    "VocabException",
    "LengthException",
    "FormatException",
    "TruncatedFileException",
    "InputException",
    "ParseException",
    "ValidationException",
    "ContractException",
    "DependencyException",
    "ProcessingException",
]
