from .exceptions import (
    GateSystemError,
    InputValidationError,
    InfeasibleError,
    NumericalError,
)
from .mode_model import ModeSpec
from .pulse import Segment, DetuningOffset, PulseProgram

__all__ = [
    'GateSystemError',
    'InputValidationError',
    'InfeasibleError',
    'NumericalError',
    'ModeSpec',
    'Segment',
    'DetuningOffset',
    'PulseProgram'
]
