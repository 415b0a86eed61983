import numpy as np
import pytest
from scipy import integrate

from liouville.anomaly import (DomainError, central_charge, constant_shift_log_ratio, coulomb_mc,
                               coulomb_moment, partition_in_metric, weyl_anomaly_check,
                               weyl_functional, sphere_singular_integral)
from liouville.correlator import InsertionSet, partition_reduced
from liouville.geometry import ConformalMetric, MobiusMap, round_density
from liouville.gmc import chaos_prefactor
from liouville.harmonics import SphereGrid

SET_B = InsertionSet.parse("0,0,1.2;1,0,1.2;0,1,1.2;0,-1,1.2;0.5,0.5,1.2", 1.0)


@pytest.fixture(scope="module")
def grid():
    return SphereGrid(32)


def test_weyl_zero_and_constant(grid):
    assert weyl_functional(ConformalMetric.round(grid), 1.0) == 0.0
    k = 0.37
    assert np.isclose(weyl_functional(ConformalMetric.constant(grid, k), 1.0), central_charge(1.0) * k / 6)


def test_weyl_quadratic(grid):
    base = ConformalMetric.from_harmonic(grid, 2, 0, 1.0)
    phi0 = ConformalMetric.constant(grid, 0.2).phi
    ts = np.array([0.0, 0.5, 1.0])
    vals = [weyl_functional(ConformalMetric(grid, t * (base.phi + phi0)), 1.3) for t in ts]
    coef = np.polyfit(ts, vals, 2)
    lin = central_charge(1.3) * 4 * grid.integrate(base.phi + phi0) / (96 * np.pi)
    assert abs(coef[2]) < 1e-8 and abs(coef[1] - lin) < 1e-8


def test_weyl_two_paths_mobius():
    g = ConformalMetric.from_mobius(SphereGrid(128), MobiusMap(1 + 0.3j, 0.5, -0.4 + 0.2j, 1.2))
    assert abs(weyl_functional(g, 1.0) - weyl_functional(g, 1.0, flat=True)) < 1e-6


def test_round_metric_equals_reduced(grid):
    p = partition_in_metric(SET_B, ConformalMetric.round(grid), 300, 16, seed=5)
    q = partition_reduced(SET_B, 300, 16, seed=5, prefactor="truncated")
    assert abs(p.params["log_estimate"] - np.log(q.estimate)) < 1e-9


def test_constant_shift_oracle(grid):
    k = 0.4
    o = constant_shift_log_ratio(SET_B, k)
    assert np.isclose(o["total"], o["c_L_k_over_6"])
    r = weyl_anomaly_check(SET_B, ConformalMetric.constant(grid, k), 200, 16, seed=1)
    assert abs(r.log_ratio - o["total"]) < 1e-9


def test_harmonic_anomaly_small(grid):
    r = weyl_anomaly_check(SET_B, ConformalMetric.from_harmonic(grid, 1, 0, 0.3), 1500, 16, seed=2)
    assert abs(r.z_score) < 3.5


def test_phi_above_band_limit_rejected(grid):
    from liouville.geometry import ResolutionError
    with pytest.raises(ResolutionError):
        partition_in_metric(SET_B, ConformalMetric.from_harmonic(grid, 12, 0, 0.3), 10, 8)


def test_sphere_integral_of_constant():
    assert np.isclose(sphere_singular_integral(np.array([[0, 0, 1.0], [1.0, 0, 0]]), [0.0, 0.0]),
                      4 * np.pi, rtol=1e-10)


def test_coulomb_n1_vs_planar_dblquad():
    q = coulomb_moment(1, 1.0, (0.5, 0.5, 0.5))
    f = lambda r, t: (r * abs(r * np.exp(1j * t)) ** -0.5 * abs(r * np.exp(1j * t) - 1) ** -0.5
                      * round_density(r * np.exp(1j * t)) ** (1 - 0.375))
    v = chaos_prefactor(1.0) * integrate.dblquad(f, 0, 2 * np.pi, 0, np.inf, epsabs=1e-10)[0]
    assert abs(q["value"] / v - 1) < 1e-6


def test_coulomb_domain_errors():
    with pytest.raises(DomainError, match="alpha1"):
        coulomb_moment(1, 1.0, (2.0, 0.5, 0.5))
    with pytest.raises(DomainError):
        coulomb_moment(2, 1.5, (0.1, 0.1, 0.1))
    with pytest.raises(DomainError):
        coulomb_moment(3, 0.5, (0.1, 0.1, 0.1))


def test_coulomb_mc_n1_small():
    q = coulomb_moment(1, 1.0, (0.5, 0.5, 0.5))["value"]
    m = coulomb_mc(1, 1.0, (0.5, 0.5, 0.5), 1000, 32)
    assert abs(m.estimate - q) < 4 * m.stderr + 0.01 * q
