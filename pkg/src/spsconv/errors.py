"""Exception hierarchy.

CLI exit codes hang off these classes: configuration problems exit with 2,
input/IO problems with 3.
"""


class SpsConvError(Exception):
    exit_code = 1


class ConfigError(SpsConvError, ValueError):
    exit_code = 2


class ShapeError(SpsConvError, ValueError):
    exit_code = 2


class DomainError(SpsConvError, ValueError):
    exit_code = 2


class ConsistencyError(SpsConvError, RuntimeError):
    """Internal invariant broken, e.g. duplicate coordinates in a tensor."""


class InputError(SpsConvError, OSError):
    exit_code = 3
