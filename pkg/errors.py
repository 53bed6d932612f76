# errors.py
from __future__ import annotations

import numpy as np
from pydantic import ValidationError

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class SimulatorError(Exception):
    """Base class for everything the simulator raises on purpose."""

    exit_code = EXIT_NUMERICAL


class ConfigError(SimulatorError, ValueError):
    exit_code = EXIT_CONFIG


class DimensionError(SimulatorError, ValueError):
    exit_code = EXIT_CONFIG


class PatternFormatError(SimulatorError, ValueError):
    """Malformed pattern CSV. `line` is 1-based when known."""

    exit_code = EXIT_IO

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TouchstoneFormatError(SimulatorError, ValueError):
    exit_code = EXIT_IO

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class NumericalError(SimulatorError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class ConsistencyError(NumericalError):
    """Two routes to the same physical quantity disagree."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, SimulatorError):
        return exc.exit_code
    if isinstance(exc, ValidationError):
        return EXIT_CONFIG
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, np.linalg.LinAlgError):
        return EXIT_NUMERICAL
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return EXIT_NUMERICAL
