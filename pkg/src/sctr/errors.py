"""Exception types shared across the toolkit."""


class NumericalError(ArithmeticError):
    """A computation produced NaN/Inf or failed to converge."""

    def __init__(self, message, *, iteration=None, node=None):
        super().__init__(message)
        self.iteration = iteration
        self.node = node


class FormatError(ValueError):
    """A persisted artifact is malformed."""

    def __init__(self, message, *, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
