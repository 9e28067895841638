"""Exact Gaussian-process maximum likelihood for Matérn fields on tile algorithms."""

from geostat.errors import (
    DomainError,
    FitFailed,
    GeostatError,
    MetricMismatch,
    NotPositiveDefinite,
)
from geostat.geometry import (
    Location,
    LocationSet,
    Metric,
    distance_matrix,
    euclidean_distance,
    generate_locations,
    haversine_gcd,
)
from geostat.covariance import MaternParams, bessel_k, gen_cov_matrix, matern
from geostat.tilealg import TileMatrix, TileVector
from geostat.simulate import SimulationSpec, simulate_field
from geostat.likelihood import (
    FitResult,
    LikelihoodProblem,
    OptimizerConfig,
    log_likelihood,
    mle_fit,
)
from geostat.predict import CvReport, Refit, k_fold_cv, krige_predict, mse

__version__ = "0.1.0"

__all__ = [
    "CvReport",
    "DomainError",
    "FitFailed",
    "FitResult",
    "GeostatError",
    "LikelihoodProblem",
    "Location",
    "LocationSet",
    "MaternParams",
    "Metric",
    "MetricMismatch",
    "NotPositiveDefinite",
    "OptimizerConfig",
    "Refit",
    "SimulationSpec",
    "TileMatrix",
    "TileVector",
    "bessel_k",
    "distance_matrix",
    "euclidean_distance",
    "gen_cov_matrix",
    "generate_locations",
    "haversine_gcd",
    "k_fold_cv",
    "krige_predict",
    "log_likelihood",
    "matern",
    "mle_fit",
    "mse",
    "simulate_field",
]
