import numpy as np
import pytest

from liouville.geometry import ConformalMetric, MobiusMap, green_round, LN2, log_round_density
from liouville.gff import (EULER_GAMMA, NumericalError, SpectralFieldSample, circle_variance_round,
                           circle_variance_truncated, draw_coefficients, gram_matrix,
                           metric_covariance, mode_scale, recenter, sample_exact, sample_spectral,
                           truncated_covariance, truncated_variance)
from liouville.harmonics import SphereGrid, Transform


def test_truncated_variance_closed_form():
    L = 50
    H = lambda n: np.sum(1.0 / np.arange(1, n + 1))
    assert np.isclose(truncated_variance(L), 0.5 * (H(L) + H(L + 1) - 1), rtol=1e-14)
    assert abs(truncated_variance(4000) - (np.log(4000) + EULER_GAMMA - 0.5)) < 1e-3


def test_node_variance_constant():
    L = 16
    T = Transform(L, SphereGrid(2 * L))
    s2 = mode_scale(L) ** 2
    # exact pointwise variance sum_lm s_l^2 Y_lm(x)^2
    Y = np.eye((L + 1) ** 2)
    var = (T.synthesize(Y * np.sqrt(s2)[:, None]) ** 2).sum(axis=0)
    assert np.ptp(var) < 1e-12
    assert np.isclose(var[0], truncated_variance(L))


def test_truncated_covariance_tends_to_green():
    x, y = 0.2 + 0.1j, -0.5 + 0.8j
    assert abs(truncated_covariance(256, x, y)[0] - green_round(x, y)) < 2e-3


def test_truncation_is_prefix():
    a = draw_coefficients(32, 5, 0, [3, 4])
    b = draw_coefficients(8, 5, 0, [3, 4])
    assert np.array_equal(a[:, :81], b)


def test_sample_bytes_round_trip():
    s = sample_spectral(8, 11, 0, range(3))
    back = SpectralFieldSample.from_bytes(s.to_bytes())
    assert np.array_equal(back.coeffs, s.coeffs) and back.L == 8 and back.seed == 11


def test_seeded_determinism():
    assert np.array_equal(sample_spectral(16, 3, 1, range(4)).coeffs,
                          sample_spectral(16, 3, 1, range(4)).coeffs)


def test_empirical_covariance_matches_series():
    L = 24
    s = sample_spectral(L, 7, 0, range(20000))
    z = np.array([0.0, 0.7 + 0.2j])
    v = s.at(z)
    prod = v[:, 0] * v[:, 1]
    se = prod.std() / np.sqrt(prod.size)
    assert abs(prod.mean() - truncated_covariance(L, z[0], z[1])[0]) < 4 * se


def test_recenter_removes_metric_mean():
    grid = SphereGrid(32)
    g = ConformalMetric.from_harmonic(grid, 1, 0, 0.5)
    s = sample_spectral(16, 1, 0, range(2))
    T = Transform(16, grid)
    r = recenter(s, g)
    assert np.max(np.abs(g.mean(T.synthesize(r.coeffs)))) < 1e-12
    vals = recenter(T.synthesize(s.coeffs), g)
    assert np.allclose(vals, T.synthesize(r.coeffs), atol=1e-12)


def test_metric_covariance_matches_green_general():
    grid = SphereGrid(128)
    g = ConformalMetric.from_mobius(grid, MobiusMap(1 + 0.3j, 0.5, -0.4 + 0.2j, 1.2))
    x, y = 0.3 + 0.2j, -0.7 + 0.5j
    assert abs(metric_covariance(64, g, x, y)[0] - g.green(x, y)[0]) < 5e-3


def test_gram_and_exact_sampler():
    grid = SphereGrid(64)
    g = ConformalMetric.round(grid)
    pts = np.array([0.0, 0.5, 1j, -1.0 + 0.3j])
    G = gram_matrix(pts, g, L=32)
    assert np.allclose(G, G.T)
    smp = sample_exact(pts, g, seed=2, size=4000, L=32)
    emp = np.cov(smp.values.T, bias=True)
    assert abs(emp[0, 1] - G[0, 1]) < 0.1


def test_gram_rejects_duplicates():
    with pytest.raises(ValueError):
        gram_matrix([0.1, 0.1], ConformalMetric.round(SphereGrid(16)))


def test_circle_variance_truncated_vs_continuum():
    # at eps well above the cutoff the band-limited and continuum circle variances agree
    x = 0.3
    assert abs(circle_variance_truncated(128, x, 0.25) - circle_variance_round(x, 0.25)) < 0.02


def test_circle_asymptotics_monotone():
    x = 0.4 - 0.3j
    res = [abs(circle_variance_round(x, e) + np.log(e) + 0.5 * log_round_density(x) - (LN2 - 0.5))
           for e in 2.0 ** -np.arange(4, 9)]
    assert all(b < a for a, b in zip(res, res[1:]))
