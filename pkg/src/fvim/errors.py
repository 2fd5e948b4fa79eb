"""Exception hierarchy shared across the package.

Numerical failures during training (overflowing conjugates, non-finite
gradients or losses) derive from :class:`StabilityError`.  Trainers catch
them and turn them into recorded stability events instead of crashing.
"""


class DomainError(ValueError):
    """An argument lies outside the domain of a mathematical function."""


class StabilityError(ArithmeticError):
    """Base class for numerical failures that terminate a training run."""

    event = "stability"

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class ConjugateOverflowError(StabilityError, OverflowError):
    event = "overflow"


class NonFiniteGradientError(StabilityError):
    event = "nonfinite_grad"


class NonFiniteLossError(StabilityError):
    event = "nonfinite_loss"


class ConfigError(ValueError):
    """Bad or unknown configuration keys and values."""


class ModeError(ValueError):
    """A demonstration dataset is in the wrong pair mode for the operation."""


class SchemaError(ValueError):
    """CSV inputs that do not share the run-log schema."""


class DomainStabilityError(StabilityError):
    """A discriminator output was pushed outside a conjugate's domain."""

    event = "domain"
