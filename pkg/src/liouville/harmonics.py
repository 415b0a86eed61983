"""Real spherical harmonics on a Gauss-Legendre x uniform-longitude grid.

Points of the sphere are addressed through the stereographic chart
z = tan(theta/2) exp(i phi), so the north pole is z = 0 and the south pole
is the point at infinity.  Coefficients are stored as a flat real vector in
degree-major order, index(l, m) = l*l + l + m with -l <= m <= l, so that a
truncation to a lower band limit is a prefix of the vector.

Real harmonics are orthonormal for the round area element:
    Y_l0 = P~_l0(cos theta)
    Y_lm = sqrt(2) P~_lm(cos theta) cos(m phi)     (m > 0)
    Y_l,-m = sqrt(2) P~_lm(cos theta) sin(m phi)   (m > 0)
with P~ the fully normalized associated Legendre functions.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np


def n_coeffs(L: int) -> int:
    return (L + 1) ** 2


def coeff_index(l, m):
    return l * l + l + m


def degrees(L: int) -> np.ndarray:
    """Degree l of every coefficient slot up to band limit L."""
    return np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1)


def legendre_table(L: int, x: np.ndarray) -> list[np.ndarray]:
    """Normalized associated Legendre functions P~_lm(x) for 0 <= m <= l <= L.

    Returns a list indexed by m; entry m has shape (L + 1 - m, len(x)) with
    rows l = m..L.  Normalization: integral over the unit sphere of
    (P~_lm e^{im phi})^2 ... such that Y_l0 = P~_l0 integrates to one.
    Uses the standard stable three-term recurrence in l at fixed m.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = []
    pmm = np.full_like(x, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(L + 1):
        if m > 0:
            pmm = pmm * np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s
        rows = np.empty((L + 1 - m, x.size))
        rows[0] = pmm
        if m + 1 <= L:
            rows[1] = np.sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            rows[l - m] = a * (x * rows[l - m - 1] - b * rows[l - m - 2])
        out.append(rows)
    return out


def sphere_angles(z):
    """(cos theta, phi) of planar points under the stereographic chart."""
    z = np.asarray(z, dtype=complex)
    inf = np.isinf(z)
    zz = np.where(inf, 0.0, z)
    r2 = np.abs(zz) ** 2
    return np.where(inf, -1.0, (1.0 - r2) / (1.0 + r2)), np.angle(zz)


def real_harmonics(L: int, z) -> np.ndarray:
    """Matrix of Y_lm(z_p), shape (len(z), (L+1)^2)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    x, phi = sphere_angles(z)
    tab = legendre_table(L, x)
    Y = np.zeros((z.size, n_coeffs(L)))
    for m in range(L + 1):
        ls = np.arange(m, L + 1)
        if m == 0:
            Y[:, coeff_index(ls, 0)] = tab[0].T
        else:
            c = np.sqrt(2.0) * np.cos(m * phi)
            sn = np.sqrt(2.0) * np.sin(m * phi)
            Y[:, coeff_index(ls, m)] = tab[m].T * c[:, None]
            Y[:, coeff_index(ls, -m)] = tab[m].T * sn[:, None]
    return Y


class SphereGrid:
    """Gauss-Legendre quadrature grid exact for band limit B.

    nlat = B + 1 colatitude rings (Gauss-Legendre in cos theta, ordered from
    the north pole), nlon = 2B + 2 longitudes offset by half a step so that
    no node sits on the real axis.  Weights are round-area weights and sum
    to 4 pi.
    """

    def __init__(self, B: int):
        if B < 1:
            raise ValueError("grid band limit must be >= 1")
        self.B = int(B)
        self.nlat = self.B + 1
        self.nlon = 2 * self.B + 2
        x, w = np.polynomial.legendre.leggauss(self.nlat)
        self.x = x[::-1].copy()
        self.wlat = w[::-1] * (2.0 * np.pi / self.nlon)
        self.theta = np.arccos(self.x)
        self.phi = 2.0 * np.pi * (np.arange(self.nlon) + 0.5) / self.nlon
        r = np.tan(self.theta / 2.0)
        self.z = (r[:, None] * np.exp(1j * self.phi)[None, :]).ravel()
        self.weights = np.repeat(self.wlat, self.nlon)
        self.shape = (self.nlat, self.nlon)
        self.size = self.nlat * self.nlon

    def __repr__(self):
        return f"SphereGrid(B={self.B}, nodes={self.size})"

    @cached_property
    def unit_vectors(self) -> np.ndarray:
        s = np.sqrt(1.0 - self.x ** 2)
        X = np.outer(s, np.cos(self.phi)).ravel()
        Y = np.outer(s, np.sin(self.phi)).ravel()
        Z = np.repeat(self.x, self.nlon)
        return np.stack([X, Y, Z], axis=-1)

    def integrate(self, f) -> np.ndarray:
        """Round-area integral of node values (last axis = nodes)."""
        return np.asarray(f) @ self.weights

    def nearest_node(self, z) -> np.ndarray:
        x, phi = sphere_angles(z)
        i = np.abs(self.x[None, :] - np.atleast_1d(x)[:, None]).argmin(axis=1)
        j = np.floor((np.mod(np.atleast_1d(phi), 2 * np.pi)) / (2 * np.pi) * self.nlon)
        j = j.astype(int) % self.nlon
        return i * self.nlon + j


class Transform:
    """Synthesis and analysis between coefficient vectors and grid values.

    Band limit L of the coefficients may be below the grid band B; the
    Legendre table is built once per (L, grid).
    """

    def __init__(self, L: int, grid: SphereGrid):
        if L > grid.B:
            raise ValueError(f"band limit {L} exceeds grid band {grid.B}")
        self.L = int(L)
        self.grid = grid
        self.table = legendre_table(self.L, grid.x)
        self._cos = [coeff_index(np.arange(m, L + 1), m) for m in range(L + 1)]
        self._sin = [coeff_index(np.arange(m, L + 1), -m) for m in range(L + 1)]
        self._phase = np.exp(1j * np.pi * np.arange(L + 1) / grid.nlon)

    @property
    def ncoef(self) -> int:
        return n_coeffs(self.L)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Node values for coefficient rows; returns (..., nodes)."""
        coeffs = np.asarray(coeffs, dtype=float)
        lead = coeffs.shape[:-1]
        c = coeffs.reshape(-1, coeffs.shape[-1])[:, : self.ncoef]
        R = c.shape[0]
        g = self.grid
        spec = np.zeros((R, g.nlat, g.nlon // 2 + 1), dtype=complex)
        for m in range(self.L + 1):
            T = self.table[m]
            A = c[:, self._cos[m]] @ T
            if m == 0:
                spec[:, :, 0] = g.nlon * A
            else:
                Bm = c[:, self._sin[m]] @ T
                spec[:, :, m] = (g.nlon / np.sqrt(2.0)) * (A - 1j * Bm) * self._phase[m]
        f = np.fft.irfft(spec, n=g.nlon, axis=-1)
        return f.reshape(*lead, g.size)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Quadrature projection of node values onto the real harmonics."""
        values = np.asarray(values, dtype=float)
        lead = values.shape[:-1]
        g = self.grid
        f = values.reshape(-1, g.nlat, g.nlon)
        F = np.fft.rfft(f, axis=-1)[:, :, : self.L + 1] * np.conj(self._phase)[None, None, :]
        out = np.zeros((f.shape[0], self.ncoef))
        for m in range(self.L + 1):
            T = self.table[m] * g.wlat[None, :]
            if m == 0:
                out[:, self._cos[0]] = F[:, :, 0].real @ T.T
            else:
                out[:, self._cos[m]] = np.sqrt(2.0) * (F[:, :, m].real @ T.T)
                out[:, self._sin[m]] = -np.sqrt(2.0) * (F[:, :, m].imag @ T.T)
        return out.reshape(*lead, self.ncoef)


def laplacian_eigen(L: int) -> np.ndarray:
    """Eigenvalue of the round Laplace-Beltrami operator per coefficient slot."""
    l = degrees(L)
    return -(l * (l + 1.0))
