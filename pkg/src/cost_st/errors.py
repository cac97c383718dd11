"""Exception hierarchy shared by every subsystem.

Each class maps to one CLI exit code (see :mod:`cost_st.cli`).
"""


class CostError(Exception):
    exit_code = 1


class InvalidArgument(CostError, ValueError):
    """A caller passed a value outside an operation's domain."""


class FormatError(CostError):
    """A file does not follow its declared binary or text layout."""

    exit_code = 3


class DataError(CostError):
    """Well-formed input that carries unusable values (NaN, misalignment)."""

    exit_code = 3


class StateError(CostError, RuntimeError):
    pass


class ConfigError(CostError):
    exit_code = 2


class TrainingError(CostError, RuntimeError):
    exit_code = 4
