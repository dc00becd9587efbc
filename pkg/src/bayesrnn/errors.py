"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or lost required precision."""


class CapacityError(ValueError):
    """The request exceeds a hard size limit (e.g. brute-force enumeration)."""


class ConfigError(ValueError):
    """A configuration object is internally inconsistent or out of range."""


class DataError(ValueError):
    """Input data violates the contract (bad targets, empty mask, ...)."""


class ContractError(TypeError):
    """An API precondition was violated (e.g. backward from a non-scalar)."""
