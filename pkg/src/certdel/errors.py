"""Exception types shared across the package."""


class CertDelError(Exception):
    """Base class for all package errors."""


class DimensionError(CertDelError, ValueError):
    pass


class BudgetExceeded(CertDelError, RuntimeError):
    """Raised when an exact computation would exceed its enumeration budget."""

    def __init__(self, what: str, size: int, budget: int):
        super().__init__(f"{what}: size {size} exceeds budget {budget}")
        self.what = what
        self.size = size
        self.budget = budget


class ParameterError(CertDelError, ValueError):
    """Parameters violate a precondition (non-prime modulus, empty window, ...)."""


class RankError(ParameterError):
    """Matrix columns do not generate Z_q^n."""
