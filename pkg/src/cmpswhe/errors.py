"""Exception types raised across the package."""


class CmpError(Exception):
    """Base class for all library errors."""


class NonInvertibleError(CmpError, ValueError):
    pass


class DimensionError(CmpError, ValueError):
    pass


class CapacityError(CmpError):
    """Raised when a computation would wrap around the modulus product.

    ``required`` and ``available`` carry the magnitudes involved when known.
    """

    def __init__(self, message, required=None, available=None):
        super().__init__(message)
        self.required = required
        self.available = available


class ModulusMismatchError(CmpError):
    pass


class OrderError(CmpError):
    pass


class KeyDerivationError(CmpError):
    pass


class KeyFormatError(CmpError, ValueError):
    pass


class ParameterError(CmpError, ValueError):
    """Key parameters violate the parameter-setting rules."""


class ExprSyntaxError(CmpError, SyntaxError):
    def __init__(self, message, text="", pos=0):
        super().__init__(f"{message} at position {pos}")
        self.text = text
        self.pos = pos


class UnboundVariableError(CmpError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unbound variable {self.name!r}"


class LaneOverflowError(CmpError, ValueError):
    pass


class FormatError(CmpError, ValueError):
    """Malformed ciphertext, frame, cascade or model file."""
