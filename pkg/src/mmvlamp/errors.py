"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands are not conformable for the requested operation."""


class ContractError(ValueError):
    """An operation was invoked outside its documented contract."""


class ParameterError(ValueError):
    """An argument value is outside its valid range."""


class GeometryError(ValueError):
    """A scene layout is geometrically degenerate."""


class DegenerateInputError(ValueError):
    """The input is degenerate for the requested operation (e.g. zero signal)."""


class FormatError(ValueError):
    """A serialized file violates its binary format."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
