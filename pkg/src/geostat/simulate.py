"""Synthetic Gaussian random fields with Matérn covariance.

``Z = L e`` where ``L`` is the tile Cholesky factor of the covariance matrix
at jittered-grid locations and ``e`` is i.i.d. standard normal. One integer
seed drives everything: sub-stream 0 places the locations, sub-stream 1
draws ``e``.
"""

from __future__ import annotations

from dataclasses import dataclass

from geostat import _random
from geostat.covariance import MaternParams, cov_tasks
from geostat.errors import NotPositiveDefinite
from geostat.geometry import LocationSet, Metric, distance_matrix, generate_locations
from geostat.tilealg import DEFAULT_NB, TaskStream, TileMatrix, TileVector, cholesky_tasks, trmm_tasks


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    params: MaternParams
    seed: int
    nb: int = DEFAULT_NB
    metric: Metric = Metric()
    workers: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")


def simulate_field(spec: SimulationSpec) -> tuple[LocationSet, TileVector]:
    """Draw locations and one field realization; a pure function of ``spec``
    (for a fixed build)."""
    locs = generate_locations(spec.n, spec.seed)
    if not spec.metric.is_euclidean:
        locs = LocationSet(locs.points, spec.metric, check_duplicates=False)
    d = distance_matrix(locs)
    e = _random.substream(spec.seed, _random.NORMALS).standard_normal(spec.n)

    stream = TaskStream()
    sigma = TileMatrix.empty_symmetric(spec.n, spec.nb)
    cov_tasks(stream, sigma, lambda rs, cs: d[rs, cs], spec.params, square=True)
    cholesky_tasks(stream, sigma)
    z = TileVector.from_array(e, spec.nb)
    trmm_tasks(stream, sigma, z)
    try:
        stream.run(spec.workers)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            exc.pivot,
            f"simulated covariance is not positive definite (pivot {exc.pivot}); "
            f"retry with a nugget > 0 (current nugget {spec.params.nugget})",
        ) from None
    return locs, z
