import numpy as np
import pytest

from liouville.correlator import (InsertionSet, SeibergError, RepositionError, conformal_weight,
                                  insertion_potential, log_prefactor_C, partition_from_z0,
                                  partition_raw_cross_check, partition_reduced, seiberg_check,
                                  unit_volume_condition, z0_samples, mobius_covariance_check,
                                  seiberg_violation_study)
from liouville.geometry import LN2, MobiusMap, green_round, SphereGrid
from liouville.gmc import ChaosParams, chaos_batches
from scipy.special import gammaln

G83 = np.sqrt(8 / 3)


def test_seiberg_examples():
    pg = InsertionSet([(0, G83), (1, G83), (-1, G83)], G83)
    assert seiberg_check(pg).passed
    g = np.sqrt(2)
    b = InsertionSet([(0, g), (1, g), (-1, g)], g)
    rep = seiberg_check(b)
    assert not rep.passed and not rep.sum_bound and abs(rep.sum_margin) < 1e-12
    q = InsertionSet([(0, 2.5), (1, 2), (-1, 2)], 1.0)
    assert not seiberg_check(q).each_bound


def test_unit_volume_condition_examples():
    pg = InsertionSet([(0, G83), (1, G83), (-1, G83)], G83)
    c = unit_volume_condition(pg)
    assert c["passed"] and np.isclose(c["lhs"], pg.Q - 1.5 * G83)
    f = unit_volume_condition(InsertionSet([(0, 0.5), (1, 0.5), (-1, 0.5)], 1.8))
    assert not f["passed"]


def test_parse_and_weights():
    s = InsertionSet.parse("0,0,1.2; 1,0,1.2;0,1,1.2", 1.0)
    assert np.allclose(s.z, [0, 1, 1j]) and np.isclose(s.s, 3.6 - 5)
    assert np.allclose(s.weights, conformal_weight(1.2, 2.5))


def test_insertion_potential():
    s = InsertionSet([(0, 1.0)], 1.0)
    assert np.isclose(insertion_potential(s, 0.5)[0], green_round(0, 0.5))
    assert insertion_potential(InsertionSet([], 1.0), 0.3)[0] == 0.0
    grid = SphereGrid(64)
    H = insertion_potential(InsertionSet([(0.3 + 0.1j, 1.0)], 1.0), grid.z)
    assert abs(grid.integrate(H) / (4 * np.pi)) < 1e-3


def test_log_prefactor_examples():
    a = 1.3
    assert np.isclose(log_prefactor_C(InsertionSet([(0.4, a)], 1.0)), (LN2 - 0.5) * a * a / 2)
    two = InsertionSet([(0, a), (1, a)], 1.0)
    assert np.isclose(log_prefactor_C(two), a * a * green_round(0, 1) + (LN2 - 0.5) * a * a / 2 * 2)
    assert log_prefactor_C(InsertionSet([(0, 0.0), (1, 0.0)], 1.0)) == 0.0


def test_z0_without_insertions_is_total_mass():
    s = InsertionSet([(0, 0.0)], 1.0)
    z = z0_samples([s], 16, 4, 3)[:, 0]
    M = next(chaos_batches(ChaosParams(1.0, 16), 3, 0, 4))[2]
    assert np.allclose(z, M.total, rtol=1e-13)


SET_B = InsertionSet.parse("0,0,1.2;1,0,1.2;0,1,1.2;0,-1,1.2;0.5,0.5,1.2", 1.0)


def test_kpz_scaling_exact():
    z0 = z0_samples([SET_B], 32, 200, 5)[:, 0]
    p1 = partition_from_z0(SET_B, z0)
    p2 = partition_from_z0(SET_B.with_mu(2.0), z0)
    assert np.isclose(p2.estimate / p1.estimate, 2 ** (-SET_B.s / SET_B.gamma), rtol=1e-12)


def test_gamma_factor_sanity():
    assert np.isclose(np.exp(gammaln(1.0) - np.log(1.0)), 1.0)


def test_raw_vs_reduced():
    z0 = z0_samples([SET_B], 32, 400, 5)[:, 0]
    r = partition_raw_cross_check(SET_B, z0)
    assert r["rel_discrepancy"] < 1e-3 and not r["truncation_warning"]
    r2 = partition_raw_cross_check(SET_B.with_mu(2.0), z0)
    assert np.isclose(r2["raw"] / r["raw"], 2 ** (-SET_B.s), rtol=1e-4)


def test_raw_rejects_nonpositive_s():
    bad = InsertionSet([(0, 1.0), (1, 1.0), (-1, 1.0)], 1.0)
    with pytest.raises(SeibergError):
        partition_raw_cross_check(bad, np.ones(5))
    with pytest.raises(SeibergError):
        partition_reduced(bad, 10, 16)


def test_mobius_identity_exact():
    r = mobius_covariance_check(SET_B, MobiusMap.identity(), 100, 16, shared_streams=True)
    assert abs(r.estimate - 1) < 1e-12


def test_mapping_insertion_to_infinity_refused():
    with pytest.raises(RepositionError):
        SET_B.mapped(MobiusMap(1, 0, 1, -1))


def test_violation_study_small():
    s = InsertionSet.parse("0,0,2.7;1,0,1.5;-1,0,1.5", 1.0)
    r = seiberg_violation_study(s, (16, 32, 64), 200, n_boot=200)
    assert not r["seiberg"]["passed"] and r["slope"] < 0
