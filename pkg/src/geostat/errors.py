"""Exception types shared across the package."""


class GeostatError(Exception):
    """Base class for all errors raised by geostat."""


class DomainError(GeostatError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class MetricMismatch(GeostatError, ValueError):
    """Two location sets with different distance metrics were combined."""


class NotPositiveDefinite(GeostatError, ArithmeticError):
    """Cholesky factorization met a non-positive pivot.

    Parameters
    ----------
    pivot : int
        Zero-based index of the failing pivot. For tile factorizations this is
        the global row index in the full matrix.
    """

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = int(pivot)
        if message is None:
            message = (
                f"matrix is not positive definite (pivot {self.pivot}); "
                "consider adding a small nugget"
            )
        super().__init__(message)


class FitFailed(GeostatError, RuntimeError):
    """Every likelihood evaluation of an optimization run failed."""
