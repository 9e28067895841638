"""Exact Gaussian log-likelihood and maximum likelihood fitting.

For a zero-mean field observed as ``Z`` at ``n`` locations,

    l(theta) = -n/2 log(2 pi) - 1/2 log|Sigma(theta)| - 1/2 Z^T Sigma(theta)^-1 Z.

One evaluation builds ``Sigma`` tile by tile, factors it with the tile
Cholesky, solves ``L y = Z`` and combines ``y . y`` with the log-determinant
read off the factor's diagonal. All three phases are submitted as a single
task stream.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from geostat import indapprox, optimize
from geostat.covariance import MaternParams, cov_tasks
from geostat.errors import FitFailed, NotPositiveDefinite
from geostat.geometry import LocationSet, distance_matrix
from geostat.tilealg import (
    DEFAULT_NB,
    TaskStream,
    TileMatrix,
    TileVector,
    cholesky_tasks,
    log_det_from_factor,
    trsm_tasks,
)

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LikelihoodProblem:
    """Observed data plus the numerical setup of a likelihood evaluation.

    ``super_tile=None`` selects the exact likelihood; an integer ``s`` selects
    the IND approximation with ``s x s`` diagonal super tiles.
    """

    locations: LocationSet
    z: np.ndarray
    nb: int = DEFAULT_NB
    super_tile: int | None = None
    workers: int | None = None
    _dist: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).reshape(-1)
        if self.z.shape[0] != self.locations.n:
            raise ValueError(f"{self.z.shape[0]} measurements for {self.locations.n} locations")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("measurements must be finite")
        if self.nb < 1:
            raise ValueError("tile size must be >= 1")
        if self.super_tile is not None and self.super_tile < 1:
            raise ValueError("super-tile size must be >= 1")

    @property
    def n(self) -> int:
        return self.locations.n

    @property
    def distances(self) -> np.ndarray:
        if self._dist is None or self._dist.shape[0] != self.n:
            self._dist = distance_matrix(self.locations)
        return self._dist


def log_likelihood(problem: LikelihoodProblem, theta: MaternParams) -> float:
    """Gaussian log-likelihood of ``problem.z`` under Matérn ``theta``.

    Raises
    ------
    NotPositiveDefinite
        If the covariance matrix cannot be factored.
    """
    n, nb, s = problem.n, problem.nb, problem.super_tile
    d = problem.distances
    stream = TaskStream()
    sigma = TileMatrix.empty_symmetric(n, nb, super_tile=s)
    cov_tasks(stream, sigma, lambda rs, cs: d[rs, cs], theta, square=True)
    if s is None:
        cholesky_tasks(stream, sigma)
    else:
        indapprox.ind_cholesky_tasks(stream, sigma, s)
    y = TileVector.from_array(problem.z, nb)
    trsm_tasks(stream, sigma, y)
    stream.run(problem.workers)
    yv = y.to_array()
    quad = float(yv @ yv)
    logdet = log_det_from_factor(sigma)
    return -0.5 * quad - 0.5 * logdet - 0.5 * n * LOG_2PI


@dataclass
class OptimizerConfig:
    """Box constraints, start point and stopping rule for :func:`mle_fit`.

    Setting ``lower[k] == upper[k]`` freezes component ``k``.
    """

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    start: tuple[float, float, float] | None = None
    xtol_rel: float = 1e-5
    max_evals: int = 500
    nugget: float = 0.0

    def __post_init__(self):
        self.lower = tuple(float(v) for v in self.lower)
        self.upper = tuple(float(v) for v in self.upper)
        if len(self.lower) != 3 or len(self.upper) != 3:
            raise ValueError("bounds need three components (theta1, theta2, theta3)")
        if any(lo <= 0 for lo in self.lower):
            raise ValueError("lower bounds must be positive")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound exceeds upper bound")
        if self.start is None:
            self.start = tuple(math.sqrt(lo * hi) for lo, hi in zip(self.lower, self.upper))
        self.start = tuple(float(v) for v in self.start)
        if any(not lo <= x <= hi for lo, x, hi in zip(self.lower, self.start, self.upper)):
            raise ValueError(f"start {self.start} outside bounds")
        if self.xtol_rel <= 0 or self.max_evals < 1:
            raise ValueError("xtol_rel must be positive and max_evals >= 1")

    @classmethod
    def default_for(cls, locations: LocationSet, **overrides) -> "OptimizerConfig":
        """Default bounds: theta1 in [0.01, 5], theta2 in [0.01, 5 x domain
        diameter], theta3 in [0.1, 2]; start at the geometric midpoint."""
        diam = max(locations.diameter(), 0.01)
        kw = dict(lower=(0.01, 0.01, 0.1), upper=(5.0, 5.0 * diam, 2.0))
        kw.update(overrides)
        return cls(**kw)


@dataclass
class FitResult:
    theta_hat: MaternParams
    loglik: float
    evaluations: int
    trace: list[tuple[tuple[float, float, float], float]]
    wall_time: float
    eval_times: list[float] = field(default_factory=list)

    @property
    def mean_eval_time(self) -> float:
        return float(np.mean(self.eval_times)) if self.eval_times else math.nan

    def to_dict(self) -> dict:
        t = self.theta_hat
        return {
            "theta_hat": [t.theta1, t.theta2, t.theta3],
            "nugget": t.nugget,
            "loglik": self.loglik,
            "evaluations": self.evaluations,
            "wall_time_s": self.wall_time,
            "time_per_iteration_s": self.mean_eval_time,
            "iteration_times_s": list(self.eval_times),
            "trace": [{"theta": list(th), "loglik": ll} for th, ll in self.trace],
        }


def mle_fit(problem: LikelihoodProblem, cfg: OptimizerConfig | None = None) -> FitResult:
    """Maximum likelihood estimate of the Matérn parameters.

    Failed (non positive definite) evaluations count as ``-inf``.

    Raises
    ------
    FitFailed
        If no evaluation succeeded.
    """
    if cfg is None:
        cfg = OptimizerConfig.default_for(problem.locations)
    trace: list[tuple[tuple[float, float, float], float]] = []
    times: list[float] = []

    def objective(x):
        t0 = time.perf_counter()
        try:
            value = log_likelihood(problem, MaternParams(x[0], x[1], x[2], cfg.nugget))
        except NotPositiveDefinite as exc:
            log.debug("rejected theta=%s: %s", x, exc)
            value = -math.inf
        times.append(time.perf_counter() - t0)
        trace.append((tuple(float(v) for v in x), value))
        return value

    t0 = time.perf_counter()
    x, fx, nevals = optimize.maximize_box(objective, cfg.start, cfg.lower, cfg.upper,
                                          xtol_rel=cfg.xtol_rel, max_evals=cfg.max_evals)
    wall = time.perf_counter() - t0
    if not math.isfinite(fx):
        raise FitFailed(f"all {nevals} likelihood evaluations failed")
    return FitResult(MaternParams(x[0], x[1], x[2], cfg.nugget), fx, nevals, trace, wall, times)
