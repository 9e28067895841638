"""Kriging prediction, mean squared error and k-fold cross-validation.

With zero prior mean the conditional mean at new sites is
``Z1 = Sigma12 Sigma22^-1 Z2`` and the conditional variance is
``diag(Sigma11) - diag(Sigma12 Sigma22^-1 Sigma21)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from geostat import _random, indapprox
from geostat.covariance import MaternParams, cov_tasks
from geostat.errors import GeostatError, MetricMismatch, NotPositiveDefinite
from geostat.geometry import LocationSet, distance_matrix, pairwise_distances
from geostat.likelihood import LikelihoodProblem, OptimizerConfig, mle_fit
from geostat.tilealg import (
    DEFAULT_NB,
    TaskStream,
    TileMatrix,
    TileVector,
    cholesky_tasks,
    gemm_tasks,
    trsm_tasks,
)

# prior means of the observed and predicted fields
PRIOR_MEAN = 0.0


def krige_predict(theta: MaternParams, obs: LocationSet, z_obs, new: LocationSet, *,
                  nb: int = DEFAULT_NB, workers: int | None = None,
                  super_tile: int | None = None, with_variance: bool = False):
    """Simple-kriging prediction at ``new`` from observations ``z_obs`` at ``obs``.

    Parameters
    ----------
    theta : MaternParams
        Covariance model, typically a maximum likelihood estimate.
    obs, new : LocationSet
        Observed and target locations; metrics must match.
    z_obs : array_like, shape (n,)
    nb : int
        Tile size.
    super_tile : int, optional
        Use the IND-approximated observation covariance. Only ``Sigma22`` is
        masked; ``Sigma12`` stays dense, so the prediction is the sum of the
        per-block kriging predictors. When every block spans the whole domain
        (e.g. shuffled locations) this sum overshoots badly.
    with_variance : bool
        Also return the conditional (kriging) variance at each target.

    Returns
    -------
    ndarray, shape (m,)
        Predicted values; ``(pred, var)`` if ``with_variance``.
    """
    if obs.metric != new.metric:
        raise MetricMismatch(f"metric mismatch: {obs.metric} vs {new.metric}")
    z_obs = np.asarray(z_obs, dtype=float).reshape(-1)
    n, m = obs.n, new.n
    if z_obs.shape[0] != n:
        raise ValueError(f"{z_obs.shape[0]} observations for {n} locations")

    d22 = distance_matrix(obs)
    d12 = pairwise_distances(new.points, obs.points, obs.metric)

    stream = TaskStream()
    s22 = TileMatrix.empty_symmetric(n, nb, super_tile=super_tile)
    cov_tasks(stream, s22, lambda rs, cs: d22[rs, cs], theta, square=True)
    s12 = TileMatrix.empty(m, n, nb)
    cov_tasks(stream, s12, lambda rs, cs: d12[rs, cs], theta, square=False)
    if super_tile is None:
        cholesky_tasks(stream, s22)
    else:
        indapprox.ind_cholesky_tasks(stream, s22, super_tile)
    x = TileVector.from_array(z_obs - PRIOR_MEAN, nb)
    trsm_tasks(stream, s22, x)
    trsm_tasks(stream, s22, x, trans=True)
    z1 = TileVector(m, nb)
    gemm_tasks(stream, s12, x, z1)
    if with_variance:
        s21 = TileMatrix.empty(n, m, nb)
        cov_tasks(stream, s21, lambda rs, cs: d12.T[rs, cs], theta, square=False)
        trsm_tasks(stream, s22, s21)
    try:
        stream.run(workers)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            exc.pivot,
            f"observation covariance is not positive definite (pivot {exc.pivot}); "
            "add a nugget to the model",
        ) from None
    pred = z1.to_array() + PRIOR_MEAN
    if not with_variance:
        return pred
    v = s21.to_dense()
    var = theta.theta1 + theta.nugget - np.einsum("ij,ij->j", v, v)
    return pred, np.maximum(var, 0.0)


def mse(pred, truth) -> float:
    """Mean squared error between two equal-length vectors."""
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    return float(np.mean((pred - truth) ** 2))


@dataclass
class Refit:
    """Refit theta on each training split; ``config=None`` uses the defaults."""

    config: OptimizerConfig | None = None


@dataclass
class CvReport:
    k: int
    per_fold_mse: list[float]
    mean_mse: float
    per_prediction_time: float
    fold_sizes: list[int] = field(default_factory=list)
    fold_thetas: list[tuple[float, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "per_fold_mse": self.per_fold_mse,
            "mean_mse": self.mean_mse,
            "per_prediction_time_s": self.per_prediction_time,
            "fold_sizes": self.fold_sizes,
            "fold_thetas": [list(t) for t in self.fold_thetas],
        }


def fold_partition(n: int, k: int, seed: int | None) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n)`` cut into ``k`` near-equal chunks."""
    if k < 2 or n < k:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = _random.substream(seed, _random.FOLDS).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def k_fold_cv(locations: LocationSet, z, k: int, theta: MaternParams | Refit, seed: int | None,
              *, nb: int = DEFAULT_NB, workers: int | None = None,
              super_tile: int | None = None) -> CvReport:
    """k-fold cross-validated prediction MSE.

    Each fold is held out in turn and predicted from the remaining data,
    either with a fixed ``theta`` or, given :class:`Refit`, with parameters
    re-estimated on the training part.

    Raises
    ------
    GeostatError
        Naming the first fold whose fit or prediction failed.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != locations.n:
        raise ValueError(f"{z.shape[0]} measurements for {locations.n} locations")
    folds = fold_partition(locations.n, k, seed)
    per_fold, thetas, pred_time = [], [], 0.0
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(locations.n), test, assume_unique=True)
        tr_locs, te_locs = locations.take(train), locations.take(test)
        try:
            if isinstance(theta, Refit):
                cfg = theta.config or OptimizerConfig.default_for(tr_locs)
                prob = LikelihoodProblem(tr_locs, z[train], nb=nb, super_tile=super_tile,
                                         workers=workers)
                fold_theta = mle_fit(prob, cfg).theta_hat
            else:
                fold_theta = theta
            t0 = time.perf_counter()
            pred = krige_predict(fold_theta, tr_locs, z[train], te_locs, nb=nb,
                                 workers=workers, super_tile=super_tile)
            pred_time += time.perf_counter() - t0
        except GeostatError as exc:
            raise GeostatError(f"cross-validation fold {f} failed: {exc}") from exc
        per_fold.append(mse(pred, z[test]))
        thetas.append(fold_theta.as_tuple())
    return CvReport(
        k=k,
        per_fold_mse=per_fold,
        mean_mse=float(np.mean(per_fold)),
        per_prediction_time=pred_time / locations.n,
        fold_sizes=[len(f) for f in folds],
        fold_thetas=thetas,
    )
