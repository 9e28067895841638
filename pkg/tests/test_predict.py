import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geostat import (
    GeostatError,
    LocationSet,
    MaternParams,
    Metric,
    MetricMismatch,
    NotPositiveDefinite,
    Refit,
    k_fold_cv,
    krige_predict,
    mse,
)
from geostat.likelihood import OptimizerConfig
from geostat.predict import fold_partition
from oracles import cov_loops, kriging_explicit

THETA = MaternParams(1.0, 0.1, 0.5)


def _data(seed, n, m):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (n + m, 2))
    return LocationSet(pts[:n]), rng.standard_normal(n), LocationSet(pts[n:]) if m else None


def test_far_location_predicts_prior_mean():
    obs = LocationSet([[0, 0], [0.05, 0.02], [0.1, 0.0]])
    new = LocationSet([[100.0, 100.0]])
    assert krige_predict(THETA, obs, [1.0, 2.0, 3.0], new, nb=2)[0] == 0.0


def test_two_point_hand_case():
    obs = LocationSet([[0.0, 0.0], [0.1, 0.0]])
    new = LocationSet([[0.05, 0.0]])
    z = np.array([0.7, -0.2])
    # Sigma12 = e^-1/2 (1, 1) and (1, 1) is an eigenvector of Sigma22 with eigenvalue 1 + e^-1
    expected = math.exp(-0.5) * z.sum() / (1 + math.exp(-1))
    assert krige_predict(THETA, obs, z, new, nb=1)[0] == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("nb", [7, 32, 128])
def test_matches_explicit_inverse(nb):
    obs, z, new = _data(1, 120, 17)
    theta = MaternParams(1.4, 0.2, 0.9)
    s22 = cov_loops(obs.points, obs.points, 1.4, 0.2, 0.9, square=True)
    s12 = cov_loops(new.points, obs.points, 1.4, 0.2, 0.9)
    ref = kriging_explicit(s22, s12, z)
    np.testing.assert_allclose(krige_predict(theta, obs, z, new, nb=nb, workers=2), ref, rtol=1e-8)


def test_interpolates_observations():
    obs, z, _ = _data(2, 50, 0)
    pred = krige_predict(THETA, obs, z, obs.take([3, 17, 40]), nb=16)
    np.testing.assert_allclose(pred, z[[3, 17, 40]], rtol=1e-6)


@settings(max_examples=20)
@given(st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-6))
def test_linear_in_observations(c):
    obs, z, new = _data(3, 40, 5)
    base = krige_predict(THETA, obs, z, new, nb=16, workers=1)
    np.testing.assert_allclose(krige_predict(THETA, obs, c * z, new, nb=16, workers=1), c * base,
                               rtol=1e-12, atol=1e-12 * abs(c))


def test_variance_matches_oracle():
    obs, z, new = _data(4, 60, 9)
    theta = MaternParams(2.0, 0.15, 1.2, nugget=0.01)
    pred, var = krige_predict(theta, obs, z, new, nb=16, with_variance=True)
    s22 = cov_loops(obs.points, obs.points, 2.0, 0.15, 1.2, 0.01, square=True)
    s12 = cov_loops(new.points, obs.points, 2.0, 0.15, 1.2)
    ref = 2.01 - np.einsum("ij,ji->i", s12, np.linalg.inv(s22) @ s12.T)
    np.testing.assert_allclose(var, ref, rtol=1e-8)
    np.testing.assert_allclose(pred, kriging_explicit(s22, s12, z), rtol=1e-8)
    _, at_obs = krige_predict(THETA, obs, z, obs.take([0, 1]), nb=16, with_variance=True)
    assert np.all(at_obs < 1e-10)


def test_ind_prediction_uses_masked_sigma22():
    obs, z, new = _data(5, 64, 6)
    exact = krige_predict(THETA, obs, z, new, nb=8)
    np.testing.assert_allclose(krige_predict(THETA, obs, z, new, nb=8, super_tile=8), exact, rtol=1e-12)
    # s=1: block-diagonal Sigma22, dense Sigma12
    s22 = cov_loops(obs.points, obs.points, 1, 0.1, 0.5, square=True)
    mask = np.kron(np.eye(8), np.ones((8, 8)))
    s12 = cov_loops(new.points, obs.points, 1, 0.1, 0.5)
    ref = kriging_explicit(s22 * mask, s12, z)
    np.testing.assert_allclose(krige_predict(THETA, obs, z, new, nb=8, super_tile=1), ref, rtol=1e-8)


def test_errors():
    obs, z, new = _data(6, 10, 2)
    with pytest.raises(MetricMismatch):
        krige_predict(THETA, obs, z, LocationSet([[1, 1]], Metric.great_circle()))
    with pytest.raises(ValueError):
        krige_predict(THETA, obs, z[:5], new)
    dup = LocationSet([[0.5, 0.5], [0.5, 0.5]], check_duplicates=False)
    with pytest.raises(NotPositiveDefinite, match="nugget"):
        krige_predict(MaternParams(1, 10, 2), dup, [1, 2], new, nb=1)


def test_mse():
    assert mse([1, 2, 3], [1, 2, 3]) == 0
    assert mse([1, 1], [0, 2]) == 1
    rng = np.random.default_rng(7)
    a, b = rng.standard_normal(7), rng.standard_normal(7)
    loop = 0.0
    for x, y in zip(a, b):
        loop += (x - y) ** 2
    assert mse(a, b) == pytest.approx(loop / 7, rel=1e-15)
    with pytest.raises(ValueError):
        mse([1, 2], [1])
    with pytest.raises(ValueError):
        mse([], [])


# shifts below ~1e-154 square to zero, so keep them clear of underflow
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20),
       st.floats(-1e6, 1e6).filter(lambda s: s == 0 or abs(s) > 1e-100))
def test_mse_properties(v, shift):
    a = np.array(v)
    assert mse(a, a) == 0
    b = a + shift
    assert mse(a, b) >= 0
    if mse(a, b) == 0:
        assert np.array_equal(a, b)


def test_fold_partition():
    folds = fold_partition(20, 20, seed=1)
    assert [len(f) for f in folds] == [1] * 20
    folds = fold_partition(400, 10, seed=3)
    assert [len(f) for f in folds] == [40] * 10
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(400))
    for f, g in zip(fold_partition(400, 10, 3), folds):
        assert np.array_equal(f, g)
    sizes = [len(f) for f in fold_partition(23, 5, 0)]
    assert sum(sizes) == 23 and max(sizes) - min(sizes) <= 1
    with pytest.raises(ValueError):
        fold_partition(5, 1, 0)
    with pytest.raises(ValueError):
        fold_partition(5, 6, 0)


def test_cv_fixed_theta():
    obs, z, _ = _data(8, 60, 0)
    rep = k_fold_cv(obs, z, 6, THETA, seed=2, nb=16)
    assert rep.k == 6 and len(rep.per_fold_mse) == 6
    assert rep.mean_mse == pytest.approx(np.mean(rep.per_fold_mse), rel=1e-15)
    assert rep.fold_sizes == [10] * 6
    assert rep.per_prediction_time > 0
    # folds recomputed by hand
    for f, test in enumerate(fold_partition(60, 6, 2)):
        train = np.setdiff1d(np.arange(60), test)
        pred = krige_predict(THETA, obs.take(train), z[train], obs.take(test), nb=16)
        assert rep.per_fold_mse[f] == pytest.approx(mse(pred, z[test]), rel=1e-12)
    d = rep.to_dict()
    assert d["k"] == 6 and len(d["fold_thetas"]) == 6


def test_cv_refit():
    obs, z, _ = _data(9, 40, 0)
    cfg = OptimizerConfig((0.1, 0.02, 0.3), (3, 1, 1.5), xtol_rel=1e-2, max_evals=40)
    rep = k_fold_cv(obs, z, 4, Refit(cfg), seed=0, nb=16)
    assert len(rep.fold_thetas) == 4
    assert len(set(rep.fold_thetas)) > 1


def test_cv_fold_failure_named():
    # every training split holds coincident points, so its covariance is singular
    locs = LocationSet(np.full((10, 2), 0.5), check_duplicates=False)
    with pytest.raises(GeostatError, match="fold"):
        k_fold_cv(locs, np.ones(10), 2, MaternParams(1, 10, 2), seed=0, nb=4)
    with pytest.raises(ValueError):
        k_fold_cv(locs, np.ones(9), 2, THETA, seed=0)
