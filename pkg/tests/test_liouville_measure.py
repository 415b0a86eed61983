import numpy as np
import pytest

from liouville.correlator import InsertionSet, SeibergError
from liouville.geometry import MobiusMap
from liouville.gmc import Complement, Disk, Union
from liouville.liouville_measure import (Pullback, sample_liouville_observable, unit_volume_shape,
                                         volume_law_test, weighted_ks, weighted_shape_means)

G83 = np.sqrt(8 / 3)
PG = InsertionSet([(0, G83), (1, G83), (-1, G83)], G83)


def test_shapes_partition_sums_to_one():
    A = Disk(0.0, 0.8)
    regions = [A, Complement(A)]
    d = sample_liouville_observable(PG, regions, 50, 16, seed=1)
    assert np.allclose(d.shapes.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((d.shapes >= 0) & (d.shapes <= 1)) and np.all(d.Y > 0)


def test_volume_independence_exact():
    regions = [Disk(0.0, 0.8), Disk(1.0, 0.3)]
    a = unit_volume_shape(PG, regions, 40, 16, seed=2, volume=1.0)
    b = unit_volume_shape(PG, regions, 40, 16, seed=2, volume=2.0)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_cfield_and_factorized_share_shapes():
    a = sample_liouville_observable(PG, [Disk(0, 0.5)], 40, 16, seed=3, method="cfield")
    b = sample_liouville_observable(PG, [Disk(0, 0.5)], 40, 16, seed=3, method="factorized")
    assert np.array_equal(a.shapes, b.shapes)
    # c-field weight is the numeric integral of e^{sc - mu e^{gamma c} Z0}; proportional to Z0^{-s/gamma}
    r = a.weights / b.weights
    assert np.ptp(r) / r.mean() < 1e-6


def test_seiberg_refusal():
    bad = InsertionSet([(0, 1.0), (1, 1.0), (-1, 1.0)], 1.0)
    with pytest.raises(SeibergError):
        sample_liouville_observable(bad, None, 10, 8)


def test_unit_volume_condition_refusal():
    bad = InsertionSet([(0, 0.5), (1, 0.5), (-1, 0.5)], 1.8)
    with pytest.raises(ValueError):
        unit_volume_shape(bad, [Disk(0, 1)], 10, 8)


def test_weighted_ks_uniform_weights_matches_scipy():
    from scipy import stats
    x = np.random.default_rng(0).gamma(0.5, size=500)
    D = weighted_ks(x, np.ones_like(x), stats.gamma(0.5).cdf)
    assert np.isclose(D, stats.kstest(x, stats.gamma(0.5).cdf).statistic)


def test_volume_law_small_run():
    d = sample_liouville_observable(PG, None, 800, 16, seed=4)
    r = volume_law_test(d, 0.5)
    assert r["ess"] > 0.2 * 800 and r["pvalue"] > 0.001


def test_pullback_region():
    psi = MobiusMap(1, 1, -3, 1)
    A = Disk(1.0, 0.3)
    B = Pullback(A, psi)
    assert B.contains(np.array([0.0]))[0]   # psi(0) = 1
    assert not B.contains(np.array([1.0]))[0]


def test_weighted_shape_means_basic():
    shapes = np.array([[0.2], [0.4]])
    m, se = weighted_shape_means(shapes, np.array([1.0, 3.0]))
    assert np.isclose(m[0], 0.35)
