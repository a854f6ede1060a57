"""Exception hierarchy.

Each family maps to one CLI exit code: configuration problems exit 2,
bad input data exits 3, numerical failures exit 4.
"""


class PodgpError(Exception):
    exit_code = 1


class ConfigError(PodgpError):
    exit_code = 2


class ValidationError(PodgpError):
    """Input data is malformed or violates a documented invariant."""

    exit_code = 3


class ParseError(ValidationError):
    pass


class MeshError(ValidationError):
    pass


class GeometryError(ValidationError):
    pass


class NumericalError(PodgpError):
    exit_code = 4


class RankError(NumericalError):
    def __init__(self, message, usable):
        super().__init__(message)
        self.usable = usable


class FactorizationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
