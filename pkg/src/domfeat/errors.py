"""Exception types shared across the package."""


class DomainError(ValueError):
    """Invalid input: out-of-range parameters, bad coordinates, shape mismatch."""


class NumericError(RuntimeError):
    """Numerical failure: factorization breakdown, singular system."""


class NonConvergenceError(RuntimeError):
    """An iterative fit failed to converge within its iteration cap."""
