"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration or structurally inconsistent arguments.

    Carries an optional ``field`` naming the offending config entry so the
    CLI can print field-level messages.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class UsageError(ValueError):
    """An operation was called in a way its contract forbids."""


class NumericError(ArithmeticError):
    """Non-finite value produced during evaluation.

    ``layer`` indexes the network layer that produced it (-1 when the
    failure is not attributable to a specific layer).
    """

    def __init__(self, message, layer=-1):
        self.layer = layer
        super().__init__(f"{message} (layer {layer})")


class NonFiniteGradients(ArithmeticError):
    """Gradient vector contains NaN/Inf; the optimizer step must be skipped."""
