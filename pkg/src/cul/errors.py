# src/cul/errors.py
"""Exception hierarchy shared by the library and the command handlers."""


class CulError(Exception):
    """Base class for every error raised on purpose by this package."""


class InvalidParamsError(CulError, ValueError):
    pass


class NonFiniteError(CulError, ArithmeticError):
    """A plant state, gradient or parameter vector left the finite range."""


class NoConvergenceError(CulError):
    pass


class UnstableClosedLoopError(CulError):
    def __init__(self, radius):
        super().__init__(f"closed-loop spectral radius {radius:.6f} >= 1")
        self.radius = radius


class BufferUnderfullError(CulError):
    def __init__(self, size, needed):
        super().__init__(f"replay buffer holds {size} transitions, need {needed}")
        self.size = size
        self.needed = needed


class EmptyBufferError(CulError):
    pass


class IncompleteRecordError(CulError):
    pass


class UnknownCaseError(CulError, KeyError):
    def __str__(self):
        # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class ConfigError(CulError):
    """Configuration could not be parsed or validated.

    `field` is the dotted key path when known, `line` the 1-based YAML line.
    """

    def __init__(self, message, field=None, line=None):
        where = []
        if field:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


class TrainingAbortedError(CulError):
    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
