"""Shared exception types."""


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class ShapeMismatch(ContractError):
    """Operand shapes do not conform to the operation signature."""


class NonFiniteValue(FloatingPointError):
    """A forward pass produced NaN or Inf."""


class FormatError(ValueError):
    """An on-disk file does not match its declared format."""
