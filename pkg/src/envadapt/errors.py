"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Shapes, layouts or settings that do not fit together."""


class UsageError(ValueError):
    """A caller passed an argument outside an operation's domain."""


class NumericError(FloatingPointError):
    """A non-finite or out-of-range value appeared during evaluation."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"{message} (layer {layer})"
        super().__init__(message)
        self.layer = layer


class DivergenceError(RuntimeError):
    """An iterative run blew up; the partial trace is attached."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class StepOverflowError(RuntimeError):
    """Backtracking rejected too many consecutive steps."""
