#!/usr/bin/env python3
"""
Error types for the Borel-Cantelli toolkit
Library code raises these; only the CLI turns them into exit codes
"""

from typing import Optional


class BorelCantelliError(Exception):
    """Base class for every error raised by the toolkit"""


class DomainError(BorelCantelliError, ValueError):
    """An argument lies outside the domain of the operation"""


class InvalidSequenceError(BorelCantelliError, ValueError):
    """A term generator produced a negative or non-finite term"""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class DegenerateWindowError(BorelCantelliError, ValueError):
    """A window contains an index where the event is certain"""


class DegenerateEventError(BorelCantelliError, ValueError):
    """A conditioning event has probability one where its complement is needed"""


class UndefinedTermError(BorelCantelliError, ArithmeticError):
    """A conditional term was requested on a (numerically) null event"""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class BudgetError(BorelCantelliError, ValueError):
    """The request exceeds the evaluation budget of an exact oracle"""


class PreconditionError(BorelCantelliError, ValueError):
    """A hypothesis of a proposition failed on the probe grid"""

    def __init__(self, condition: str, detail: str = ""):
        message = f"precondition violated: {condition}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.condition = condition


class AccuracyError(BorelCantelliError, ArithmeticError):
    """Quadrature could not reach its tolerance within the panel budget"""

    def __init__(self, message: str, best_value: float, error_estimate: float):
        super().__init__(f"{message}: best value {best_value!r}, error estimate {error_estimate:.3e}")
        self.best_value = best_value
        self.error_estimate = error_estimate


class RootFindError(BorelCantelliError, ArithmeticError):
    """A conditional quantile could not be inverted"""


class ConsistencyError(BorelCantelliError, RuntimeError):
    """Two independent computation routes disagree"""


class ConfigError(BorelCantelliError, ValueError):
    """An experiment configuration is invalid"""
