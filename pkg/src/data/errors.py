class DomainMismatchError(ValueError):
    """Raised when an operation needs a graph universe and gets a flat one."""


class QueryValidationError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class BudgetExhaustedError(RuntimeError):
    """Raised on every query answered after the update budget is spent."""


class ToyScaleError(RuntimeError):
    """Raised when median-mechanism enumeration would exceed its size cap."""


class InvariantViolationError(RuntimeError):
    pass


class DistinguisherContractError(RuntimeError):
    pass
