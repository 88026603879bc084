"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line interface:
2 for configuration problems, 3 for bad input data and 4 for numerical
failures.
"""

from __future__ import annotations


class MisfitError(Exception):
    exit_code = 4

    @property
    def tag(self) -> str:
        return type(self).__name__


class ConfigError(MisfitError):
    exit_code = 2


class DataError(MisfitError, ValueError):
    exit_code = 3


class NumericalError(MisfitError, ArithmeticError):
    exit_code = 4


# dataset
class MalformedRow(DataError):
    pass


class InconsistentOutcome(DataError):
    pass


class TimeOutOfRange(DataError):
    pass


class DuplicateTime(DataError):
    pass


class InvalidDataset(DataError):
    pass


class InvalidGrid(ConfigError, ValueError):
    pass


class GridMismatch(ConfigError, ValueError):
    pass


# smooth
class SingularFit(NumericalError):
    pass


class InsufficientPairs(DataError):
    pass


class DegenerateOutcome(DataError):
    pass


# fpca
class RankDeficient(NumericalError):
    def __init__(self, message: str, usable_rank: int):
        super().__init__(message)
        self.usable_rank = usable_rank


# impute
class IllConditioned(NumericalError):
    pass


class ModeUnsupported(ConfigError, ValueError):
    pass


# glmfit
class SingularDesign(NumericalError):
    pass


class Separation(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


# inference
class Empty(ConfigError, ValueError):
    pass


class EmptySpectrum(NumericalError):
    pass


class InvalidInput(ConfigError, ValueError):
    pass


# simulate
class UnsupportedSmoothness(ConfigError, ValueError):
    pass


class NotPSD(NumericalError):
    pass
