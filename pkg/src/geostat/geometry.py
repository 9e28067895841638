"""Spatial locations, distance metrics and the jittered-grid location generator.

Two metrics are supported. ``Metric.euclidean()`` treats coordinates as points
in the plane. ``Metric.great_circle(radius)`` treats them as (longitude,
latitude) pairs in degrees and measures haversine distance on a sphere of the
given radius, in whatever length units the radius carries (km by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from geostat._random import LOCATIONS, substream
from geostat.errors import DomainError, MetricMismatch

EARTH_RADIUS_KM = 6371.0
DUPLICATE_TOL = 1e-12


class Location(NamedTuple):
    """A single 2-D site: (x, y) or (longitude, latitude) in degrees."""

    c1: float
    c2: float


@dataclass(frozen=True)
class Metric:
    kind: str = "euclidean"
    radius: float = EARTH_RADIUS_KM

    def __post_init__(self):
        if self.kind not in ("euclidean", "great_circle"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise DomainError(f"sphere radius must be positive, got {self.radius}")

    @classmethod
    def euclidean(cls) -> "Metric":
        return cls("euclidean")

    @classmethod
    def great_circle(cls, radius: float = EARTH_RADIUS_KM) -> "Metric":
        return cls("great_circle", float(radius))

    @property
    def is_euclidean(self) -> bool:
        return self.kind == "euclidean"

    def __str__(self) -> str:
        if self.is_euclidean:
            return "euclidean"
        return f"gcd:{self.radius:g}"


def _check_lonlat(lon, lat):
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if np.any(np.abs(lon) > 180.0) or np.any(np.abs(lat) > 90.0):
        raise DomainError("longitude must lie in [-180, 180] and latitude in [-90, 90]")


class LocationSet:
    """An ordered set of distinct 2-D locations sharing one metric.

    Parameters
    ----------
    points : array_like, shape (n, 2)
        Coordinates, one row per location.
    metric : Metric, optional
        Coordinate interpretation; Euclidean by default.
    check_duplicates : bool
        Reject sets with two points closer than 1e-12 (native units). The
        covariance matrix of such a set is singular.
    """

    def __init__(self, points, metric: Metric | None = None, check_duplicates: bool = True):
        pts = np.array(points, dtype=float, copy=True)
        if pts.ndim == 1 and pts.size == 2:
            pts = pts.reshape(1, 2)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a LocationSet needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise DomainError("location coordinates must be finite")
        self.metric = metric if metric is not None else Metric.euclidean()
        if not self.metric.is_euclidean:
            _check_lonlat(pts[:, 0], pts[:, 1])
        if check_duplicates and pts.shape[0] > 1:
            pairs = cKDTree(pts).query_pairs(DUPLICATE_TOL)
            if pairs:
                i, j = min(pairs)
                raise DomainError(f"locations {i} and {j} coincide")
        pts.setflags(write=False)
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, idx) -> "Location | LocationSet":
        if isinstance(idx, (int, np.integer)):
            return Location(*map(float, self.points[idx]))
        return LocationSet(self.points[idx], self.metric, check_duplicates=False)

    def __iter__(self):
        for row in self.points:
            yield Location(float(row[0]), float(row[1]))

    def __repr__(self) -> str:
        return f"LocationSet(n={self.n}, metric={self.metric})"

    def take(self, index) -> "LocationSet":
        """Subset (or reorder) by an integer index array."""
        return LocationSet(self.points[np.asarray(index)], self.metric, check_duplicates=False)

    def diameter(self) -> float:
        """Upper bound on the largest pairwise distance (bounding-box diagonal)."""
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        if self.metric.is_euclidean:
            return float(np.hypot(*(hi - lo)))
        return haversine_gcd(Location(*lo), Location(*hi), self.metric.radius)


def euclidean_distance(a: Location, b: Location) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def haversine_gcd(a: Location, b: Location, radius: float = EARTH_RADIUS_KM) -> float:
    """Great-circle distance between two (lon, lat) points given in degrees."""
    if not radius > 0:
        raise DomainError(f"sphere radius must be positive, got {radius}")
    _check_lonlat([a[0], b[0]], [a[1], b[1]])
    lam1, phi1 = math.radians(a[0]), math.radians(a[1])
    lam2, phi2 = math.radians(b[0]), math.radians(b[1])
    h = math.sin((phi2 - phi1) / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin((lam2 - lam1) / 2) ** 2
    return 2.0 * radius * math.asin(math.sqrt(min(h, 1.0)))


def _haversine_block(p, q, radius):
    lam1 = np.radians(p[:, 0])[:, None]
    phi1 = np.radians(p[:, 1])[:, None]
    lam2 = np.radians(q[:, 0])[None, :]
    phi2 = np.radians(q[:, 1])[None, :]
    h = np.sin((phi2 - phi1) / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin((lam2 - lam1) / 2) ** 2
    return 2.0 * radius * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def pairwise_distances(p: np.ndarray, q: np.ndarray, metric: Metric) -> np.ndarray:
    """Distances between rows of two raw coordinate arrays under ``metric``."""
    if metric.is_euclidean:
        dx = p[:, 0][:, None] - q[:, 0][None, :]
        dy = p[:, 1][:, None] - q[:, 1][None, :]
        return np.hypot(dx, dy)
    return _haversine_block(p, q, metric.radius)


def distance_matrix(a: LocationSet, b: LocationSet | None = None) -> np.ndarray:
    """Dense (m, n) matrix of metric distances between two location sets.

    With ``b`` omitted (or ``b is a``) the square matrix is returned with an
    exactly zero diagonal and exact symmetry.
    """
    if b is None:
        b = a
    if a.metric != b.metric:
        raise MetricMismatch(f"metric mismatch: {a.metric} vs {b.metric}")
    d = pairwise_distances(a.points, b.points, a.metric)
    if b is a:
        d = np.tril(d, -1)
        d = d + d.T
    return d


def generate_locations(n: int, seed: int | np.random.Generator | None = None) -> LocationSet:
    """Irregular locations in the unit square from a jittered regular grid.

    A ``g x g`` grid with ``g = ceil(sqrt(n))`` is perturbed cell-wise by
    Uniform(-0.4, 0.4) offsets and scaled into (0, 1)^2; the points are
    shuffled and the first ``n`` kept. Same-row or same-column neighbours stay
    at least ``0.2 / g`` apart.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, LOCATIONS)
    g = math.isqrt(n - 1) + 1
    r, c = np.meshgrid(np.arange(1, g + 1), np.arange(1, g + 1), indexing="ij")
    jitter = rng.uniform(-0.4, 0.4, size=(2, g, g))
    x = (r - 0.5 + jitter[0]) / g
    y = (c - 0.5 + jitter[1]) / g
    pts = np.column_stack([x.ravel(), y.ravel()])
    order = rng.permutation(g * g)[:n]
    return LocationSet(pts[order], Metric.euclidean(), check_duplicates=False)
