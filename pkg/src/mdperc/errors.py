"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """A precondition of an operation was violated by the caller."""


class ResourceLimitError(RuntimeError):
    """A computation exceeded an explicit resource budget (rings, margin, bits)."""
