"""Exception types shared across the package."""


class EchoformerError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(EchoformerError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class ConfigurationError(EchoformerError, ValueError):
    """Invalid option value or inconsistent configuration."""


class DegenerateInputError(EchoformerError, ValueError):
    """An input leaves the operation undefined (e.g. no live positions)."""


class EvaluationError(EchoformerError, ArithmeticError):
    """A forward evaluation produced a non-finite value."""


class ClipRejectedError(EchoformerError, ValueError):
    """The requested clip cannot be constructed; caller may resample or skip."""


class FormatError(EchoformerError, ValueError):
    """On-disk data is corrupt or has an unexpected layout."""


class ValidationError(EchoformerError, ValueError):
    """A value is outside its documented domain."""
