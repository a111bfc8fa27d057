class ImpactFallError(Exception):
    """Base class for errors raised by this package."""


class DataError(ImpactFallError, ValueError):
    """Input data violates a documented contract (schema, shape, label values)."""


class ConfigError(ImpactFallError, ValueError):
    """Pipeline configuration failed validation."""


class NotFittedError(ImpactFallError, RuntimeError):
    pass
