"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad inputs, malformed files, or violated preconditions (CLI exit code 1)."""


class NumericError(ArithmeticError):
    """Non-finite values encountered during training or evaluation (CLI exit code 2)."""
