"""Liouville measure: total-volume law and unit-volume shapes.

Under the Liouville expectation with insertions, the random area measure is
Z(A) = e^{gamma c} Z0(A) with c integrated against e^{sc} exp(-mu e^{gamma c} Z0).
Writing Y = e^{gamma c} Z0(total), the pair (Y, shape) factorizes: Y is
Gamma(s/gamma, rate mu) and the shape Z0(.)/Z0(total) carries the weight
Z0(total)^{-s/gamma}.

Two samplers are provided:
  * factorized: Y drawn from the Gamma law, shapes weighted (exact);
  * c-field: c drawn per replica from its conditional density on a numeric
    grid, weight = the numerically integrated c-density.  The Gamma law of Y
    is then an output, not an input, and is what the KS tests examine.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .correlator import InsertionSet, SeibergError, insertion_field, seiberg_check, unit_volume_condition
from .estimators import kish_ess, replica_rng
from .gmc import ChaosParams, chaos_batches, region_mask, transform_for


@dataclass
class VolumeDraws:
    Y: np.ndarray              # total volume per replica
    shapes: np.ndarray         # (replicas, regions) Z0(A_j)/Z0(total)
    weights: np.ndarray        # importance weights (unnormalized)
    z0: np.ndarray
    ess: float

    def rows(self):
        """(replica, Y, shape_1..k, weight) table."""
        n = self.Y.size
        return np.column_stack([np.arange(n), self.Y, self.shapes, self.weights])

    def weighted_mean(self, values) -> float:
        w = self.weights / self.weights.sum()
        return float(np.sum(w * values))


def _z0_and_shapes(iset: InsertionSet, regions, L: int, replicas: int, seed: int, stream: int,
                   B: int | None = None, pullback=None):
    params = ChaosParams(iset.gamma, L, B)
    grid = transform_for(L, params.grid_band).grid
    eH = np.exp(iset.gamma * insertion_field(iset, L, params.grid_band))
    masks = [region_mask(r, grid) for r in (regions or [])]
    tot, parts = [], []
    for _, _, M in chaos_batches(params, seed, stream, replicas):
        w = M.masses * eH
        tot.append(w.sum(axis=1))
        parts.append(np.column_stack([w[:, m].sum(axis=1) for m in masks]) if masks
                     else np.zeros((w.shape[0], 0)))
    z0 = np.concatenate(tot)
    return z0, np.vstack(parts) / z0[:, None]


def sample_liouville_observable(iset: InsertionSet, regions=None, replicas: int = 2000,
                                L: int = 64, seed: int = 21, stream: int = 0,
                                method: str = "cfield", ess_min: float = 0.2) -> VolumeDraws:
    rep = seiberg_check(iset)
    if not rep.passed:
        raise SeibergError(rep.as_dict())
    z0, shapes = _z0_and_shapes(iset, regions, L, replicas, seed, stream)
    g, s, mu = iset.gamma, iset.s, iset.mu
    rng = replica_rng(seed, stream + 1000, 0)
    if method == "factorized":
        Y = rng.gamma(s / g, 1.0 / mu, size=z0.size)
        w = z0 ** (-s / g)
    elif method == "cfield":
        Y, w = _cfield_draws(z0, g, s, mu, rng)
    else:
        raise ValueError(method)
    ess = kish_ess(w)
    if ess < ess_min * z0.size:
        raise RuntimeError(f"effective sample size {ess:.0f} below {ess_min} of {z0.size}")
    return VolumeDraws(Y, shapes, w, z0, ess)


def _cfield_draws(z0, g, s, mu, rng, n_grid: int = 4001):
    """Draw c from e^{sc} exp(-mu e^{gc} Z0) on a per-replica numeric grid.

    The grid is centered on the density's mode c* = ln(s/(g mu Z0))/g; its
    extent is chosen so the density is below 1e-12 of the peak at both ends.
    The weight is the trapezoid integral of the density.
    """
    u = np.linspace(-np.log(1e12) / s - 1.0,
                    (np.log(np.log(1e12) + s / g + 10) - np.log(s / g)) / g + 1.0, n_grid)
    Y = np.empty(z0.size)
    w = np.empty(z0.size)
    U = rng.random(z0.size)
    for k, z in enumerate(z0):
        cstar = np.log(s / (g * mu * z)) / g
        c = cstar + u
        logf = s * c - mu * np.exp(g * c) * z
        f = np.exp(logf - logf.max())
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(c))])
        tot = cdf[-1]
        w[k] = tot * np.exp(logf.max())
        ck = np.interp(U[k] * tot, cdf, c)
        Y[k] = np.exp(g * ck) * z
    return Y, w


def weighted_ks(x, w, cdf):
    """KS distance between the weighted ECDF of x and a continuous cdf."""
    order = np.argsort(x)
    x, w = x[order], w[order] / w.sum()
    F = cdf(x)
    hi = np.cumsum(w)
    lo = hi - w
    return float(max(np.max(hi - F), np.max(F - lo)))


def volume_law_test(draws: VolumeDraws, shape: float, mu: float = 1.0, level: float = 0.01) -> dict:
    """Weighted KS test of total volume against Gamma(shape, rate mu)."""
    D = weighted_ks(draws.Y, draws.weights, stats.gamma(shape, scale=1.0 / mu).cdf)
    n = max(int(draws.ess), 1)
    crit = float(stats.kstwo.ppf(1 - level, n))
    p = float(stats.kstwo.sf(D, n))
    wn = draws.weights / draws.weights.sum()
    mean = float(np.sum(wn * draws.Y))
    var = float(np.sum(wn * (draws.Y - mean) ** 2))
    return {"ks": D, "critical": crit, "pvalue": p, "ess": draws.ess, "passed": D < crit,
            "fit_shape": mean ** 2 / var, "fit_rate": mean / var,
            "target_shape": shape, "target_rate": mu}


def unit_volume_shape(iset: InsertionSet, regions, replicas: int = 2000, L: int = 64,
                      seed: int = 31, stream: int = 0, volume: float = 1.0):
    """Shapes Z0(A_j)/Z0 with weights Z0^{-s/gamma}.

    The conditioning volume enters neither the shapes nor the weights, so the
    result is the same for every volume (the law does not depend on it).
    """
    cond = unit_volume_condition(iset)
    if not cond["passed"]:
        raise ValueError(f"unit-volume condition fails: {cond}")
    if volume <= 0:
        raise ValueError("volume must be positive")
    z0, shapes = _z0_and_shapes(iset, regions, L, replicas, seed, stream)
    w = z0 ** (-iset.s / iset.gamma)
    return shapes, w


def weighted_shape_means(shapes, w):
    """Weighted means and delta-method SEs of shape coordinates."""
    w = np.asarray(w, float)
    wn = w / w.sum()
    m = wn @ shapes
    n = w.size
    infl = (w[:, None] / w.mean()) * (shapes - m[None, :])
    se = infl.std(axis=0, ddof=1) / np.sqrt(n)
    return m, se


@dataclass(frozen=True)
class Pullback:
    """psi^{-1}(A): x belongs iff psi(x) is in A."""
    region: object
    psi: object

    def contains(self, z):
        return self.region.contains(self.psi(z))
