"""Round sphere geometry in the stereographic chart.

Green functions of conformal metrics, Moebius maps, curvature and the
log-potential identities used throughout the package.  The round metric is
ghat(x) = 4 / (1 + |x|^2)^2, which is the unit sphere pulled back to the
plane; its area element is the Gauss-Legendre grid weight.

Two independent routes are provided for the logarithmic potentials that
enter the Green functions: direct node quadrature with singularity
subtraction, and a spectral (Funk-Hecke) route.  Tests compare them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .harmonics import SphereGrid, Transform, degrees, legendre_table, n_coeffs, coeff_index

LN2 = np.log(2.0)
# Mean of ln(1/|z - z'|) under the normalized round area (double average).
THETA_ROUND = -0.5
# Integral of -ln chord(x, .) over the unit sphere, the same for every x.
CHORD_LOG_TOTAL = 4.0 * np.pi * (0.5 - LN2)


class GeometryError(ValueError):
    pass


class SingularityError(GeometryError):
    pass


class ResolutionError(GeometryError):
    pass


@dataclass(frozen=True)
class Point:
    re: float = 0.0
    im: float = 0.0
    infinite: bool = False

    @classmethod
    def at_infinity(cls) -> "Point":
        return cls(0.0, 0.0, True)

    def __complex__(self):
        if self.infinite:
            raise GeometryError("point at infinity has no planar coordinate")
        return complex(self.re, self.im)


def as_complex(x) -> np.ndarray | complex:
    if isinstance(x, Point):
        return complex(x)
    return np.asarray(x, dtype=complex) if np.ndim(x) else complex(x)


def round_density(x):
    """ghat(x) = 4 / (1 + |x|^2)^2."""
    z = as_complex(x)
    return 4.0 / (1.0 + np.abs(z) ** 2) ** 2


def log_round_density(x):
    z = as_complex(x)
    return np.log(4.0) - 2.0 * np.log1p(np.abs(z) ** 2)


def chord(z, w):
    """Euclidean distance in R^3 between the images of z and w on the unit sphere."""
    z, w = as_complex(z), as_complex(w)
    return 2.0 * np.abs(z - w) / np.sqrt((1.0 + np.abs(z) ** 2) * (1.0 + np.abs(w) ** 2))


def unit_vector(z) -> np.ndarray:
    z = np.asarray(as_complex(z))
    r2 = np.abs(z) ** 2
    return np.stack([2 * z.real, 2 * z.imag, 1 - r2], axis=-1) / (1 + r2)[..., None]


def green_round(x, y):
    """Zero-mean Green function of the round metric.

    G(x, y) = ln 1/|x - y| - (ln ghat(x) + ln ghat(y))/4 + ln 2 - 1/2,
    which equals -ln chord(x, y) + ln 2 - 1/2.
    """
    x, y = as_complex(x), as_complex(y)
    d = np.abs(x - y)
    if np.any(d == 0):
        raise SingularityError("green_round evaluated on the diagonal")
    return (-np.log(d) - 0.25 * (log_round_density(x) + log_round_density(y))
            + LN2 - 0.5)


# ----------------------------------------------------------------------------
# Moebius maps

class MobiusMap:
    """z -> (a z + b) / (c z + d), stored with ad - bc = 1."""

    def __init__(self, a, b, c, d):
        a, b, c, d = (complex(v) for v in (a, b, c, d))
        det = a * d - b * c
        if abs(det) < 1e-12:
            raise GeometryError("degenerate Moebius map (ad - bc = 0)")
        r = np.sqrt(det)
        self.a, self.b, self.c, self.d = a / r, b / r, c / r, d / r

    @classmethod
    def identity(cls):
        return cls(1, 0, 0, 1)

    @classmethod
    def rotation(cls, angle: float):
        """Rotation of the sphere about its polar axis."""
        return cls(np.exp(0.5j * angle), 0, 0, np.exp(-0.5j * angle))

    @classmethod
    def dilation(cls, k: float):
        return cls(np.sqrt(k), 0, 0, 1 / np.sqrt(k))

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 1.0):
        """A random map near the identity (scale ~ distortion strength)."""
        v = rng.standard_normal(8) * scale
        a = 1 + v[0] + 1j * v[1]
        b = v[2] + 1j * v[3]
        c = v[4] + 1j * v[5]
        d = 1 + v[6] + 1j * v[7]
        return cls(a, b, c, d)

    @property
    def params(self):
        return self.a, self.b, self.c, self.d

    def __call__(self, z):
        return self.apply(z)

    def __matmul__(self, other: "MobiusMap") -> "MobiusMap":
        M = self.matrix @ other.matrix
        return MobiusMap(*M.ravel())

    def __repr__(self):
        return "MobiusMap(" + ", ".join(f"{v:.6g}" for v in self.params) + ")"

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def inverse(self) -> "MobiusMap":
        return MobiusMap(self.d, -self.b, -self.c, self.a)

    @property
    def pole(self):
        return None if self.c == 0 else -self.d / self.c

    def is_isometry(self, tol: float = 1e-12) -> bool:
        M = self.matrix
        return np.allclose(M @ M.conj().T, np.eye(2), atol=tol)

    def apply(self, x):
        """Image of x; the pole maps to Point.at_infinity() for Point input."""
        if isinstance(x, Point):
            if x.infinite:
                if self.c == 0:
                    return Point.at_infinity()
                w = self.a / self.c
                return Point(w.real, w.imag)
            z = complex(x)
            den = self.c * z + self.d
            if den == 0:
                return Point.at_infinity()
            w = (self.a * z + self.b) / den
            return Point(w.real, w.imag)
        z = as_complex(x)
        den = self.c * z + self.d
        if np.any(den == 0):
            raise GeometryError("point at the pole of the map; pass a Point")
        return (self.a * z + self.b) / den

    def _check_pole(self, z):
        if np.any(self.c * z + self.d == 0):
            raise GeometryError("evaluation at the pole of the map")

    def derivative(self, x):
        z = as_complex(x)
        self._check_pole(z)
        return 1.0 / (self.c * z + self.d) ** 2

    def conformal_factor(self, x):
        """phi = ln(ghat(psi x) |psi'(x)|^2 / ghat(x))."""
        z = as_complex(x)
        self._check_pole(z)
        r2 = np.abs(z) ** 2
        return 2.0 * (np.log1p(r2) - np.log(np.abs(self.a * z + self.b) ** 2
                                             + np.abs(self.c * z + self.d) ** 2))

    def conformal_factor_xyz(self, v: np.ndarray) -> np.ndarray:
        """Conformal factor at unit vectors, defined on the whole sphere.

        Homogeneous coordinates z = p/q with (p, q) = (X + iY, 1 + Z) on the
        northern half and (1 - Z, X - iY) on the southern half; then
        phi = 2 ln((|p|^2 + |q|^2) / (|ap + bq|^2 + |cp + dq|^2)).
        """
        v = np.asarray(v, dtype=float)
        north = v[..., 2] >= 0
        p = np.where(north, v[..., 0] + 1j * v[..., 1], 1.0 - v[..., 2])
        q = np.where(north, 1.0 + v[..., 2], v[..., 0] - 1j * v[..., 1])
        num = np.abs(p) ** 2 + np.abs(q) ** 2
        den = np.abs(self.a * p + self.b * q) ** 2 + np.abs(self.c * p + self.d * q) ** 2
        return 2.0 * (np.log(num) - np.log(den))


def cross_ratio(z1, z2, z3, z4):
    return ((z1 - z3) * (z2 - z4)) / ((z2 - z3) * (z1 - z4))


def green_mobius_rule_check(psi: MobiusMap, x, y) -> float:
    """|G(psi x, psi y) - G(x, y) + (phi(x) + phi(y))/4| (all closed form)."""
    x, y = as_complex(x), as_complex(y)
    lhs = green_round(psi(x), psi(y))
    rhs = green_round(x, y) - 0.25 * (psi.conformal_factor(x) + psi.conformal_factor(y))
    return float(np.max(np.abs(lhs - rhs)))


# ----------------------------------------------------------------------------
# Log-kernel potentials on the grid

def _chord_log_nodes(grid: SphereGrid, rho: np.ndarray) -> np.ndarray:
    """V(x_k) = sum_j w_j rho_j (-ln chord(x_k, y_j)) at every node.

    Ring-pair convolutions in longitude through the FFT.  The self term is
    treated by singularity subtraction:
        V(x) = rho(x) * int(-ln chord) + int (rho - rho(x)) (-ln chord),
    the second integrand vanishing at the singular node.
    """
    nlat, nlon = grid.shape
    rho = np.asarray(rho, dtype=float).reshape(nlat, nlon)
    x = grid.x
    s = np.sqrt(1.0 - x * x)
    dphi = 2.0 * np.pi * np.arange(nlon) / nlon
    cosd = np.cos(dphi)
    wr_hat = np.fft.rfft(rho * grid.wlat[:, None], axis=-1)
    V = np.empty((nlat, nlon))
    for i in range(nlat):
        cosang = x[i] * x[:, None] + s[i] * s[:, None] * cosd[None, :]
        c2 = np.clip(2.0 - 2.0 * cosang, 0.0, None)
        with np.errstate(divide="ignore"):
            K = -0.5 * np.log(c2)
        K[i, 0] = 0.0
        K_hat = np.fft.rfft(K, axis=-1)
        # circular correlation: sum_b K(a - b) f(b)
        conv = np.fft.irfft((K_hat * wr_hat).sum(axis=0), n=nlon)
        # sum over nodes of K against the weights alone (ring-constant)
        S = (K.sum(axis=1) * grid.wlat).sum()
        V[i] = conv + rho[i] * (CHORD_LOG_TOTAL - S)
    return V.ravel()


def _chord_log_points(grid: SphereGrid, rho: np.ndarray, v: np.ndarray, rho_at) -> np.ndarray:
    """Same potential at arbitrary targets given as unit vectors."""
    U = grid.unit_vectors
    out = np.empty(v.shape[0])
    for k in range(v.shape[0]):
        c2 = np.clip(2.0 - 2.0 * (U @ v[k]), 1e-300, None)
        K = -0.5 * np.log(c2)
        out[k] = rho_at[k] * CHORD_LOG_TOTAL + np.dot(grid.weights * (rho - rho_at[k]), K)
    return out


class ConformalMetric:
    """Metric g = exp(phi) ghat with phi sampled on a quadrature grid.

    phi may be given as node values or as a callable on unit vectors; a
    callable allows exact off-grid evaluation.  Off-grid values otherwise
    come from the band-limited expansion of the density exp(phi).
    """

    def __init__(self, grid: SphereGrid, phi=None, phi_xyz=None, name: str = "g"):
        self.grid = grid
        self.name = name
        self._phi_xyz = phi_xyz
        if phi is None and phi_xyz is not None:
            phi = phi_xyz(grid.unit_vectors)
        if phi is None:
            phi = np.zeros(grid.size)
        self.phi = np.asarray(phi, dtype=float).reshape(grid.size)
        self.phi.setflags(write=False)
        self.rho = np.exp(self.phi)
        self.weights = grid.weights * self.rho
        if np.any(self.weights <= 0):
            raise GeometryError("metric weights must be positive")
        self.volume = float(self.weights.sum())

    # constructors
    @classmethod
    def round(cls, grid: SphereGrid):
        return cls(grid, phi_xyz=lambda v: np.zeros(v.shape[:-1]), name="round")

    @classmethod
    def constant(cls, grid: SphereGrid, k: float):
        return cls(grid, phi_xyz=lambda v: np.full(v.shape[:-1], float(k)), name=f"const({k})")

    @classmethod
    def from_mobius(cls, grid: SphereGrid, psi: MobiusMap):
        return cls(grid, phi_xyz=psi.conformal_factor_xyz, name=repr(psi))

    @classmethod
    def from_harmonic(cls, grid: SphereGrid, l: int, m: int, amplitude: float):
        """phi = amplitude * Y_lm / max|Y_lm|, a single band-limited mode."""
        def f(v):
            x = v[..., 2]
            ph = np.arctan2(v[..., 1], v[..., 0])
            tab = legendre_table(l, np.ravel(x))[abs(m)][l - abs(m)]
            ang = np.ones_like(ph) if m == 0 else np.sqrt(2) * (np.cos(m * ph) if m > 0 else np.sin(-m * ph))
            return (tab.reshape(x.shape) * ang)
        peak = np.max(np.abs(f(grid.unit_vectors)))
        return cls(grid, phi_xyz=lambda v: amplitude * f(v) / peak, name=f"Y({l},{m})*{amplitude}")

    @property
    def is_round(self) -> bool:
        return not np.any(self.phi)

    def mean(self, h) -> np.ndarray:
        """m_g(h) for node-sampled h (last axis = nodes)."""
        return np.asarray(h) @ self.weights / self.volume

    # off-grid density
    @cached_property
    def _rho_coeffs(self):
        return Transform(self.grid.B, self.grid).analyze(self.rho)

    def rho_at_xyz(self, v: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(v)
        if self._phi_xyz is not None:
            return np.exp(self._phi_xyz(v))
        return _eval_coeffs_xyz(self._rho_coeffs, self.grid.B, v)

    def rho_at(self, z) -> np.ndarray:
        return self.rho_at_xyz(unit_vector(np.atleast_1d(as_complex(z))))

    # chord-log potentials  V(x) = int -ln chord(x, y) rho(y) dsigma(y)
    @cached_property
    def chord_potential_nodes(self) -> np.ndarray:
        return _chord_log_nodes(self.grid, self.rho)

    def chord_potential(self, z, method: str = "direct") -> np.ndarray:
        v = np.atleast_2d(z) if not np.iscomplexobj(z) and np.shape(z)[-1:] == (3,) \
            else unit_vector(np.atleast_1d(as_complex(z)))
        if method == "direct":
            return _chord_log_points(self.grid, self.rho, v, self.rho_at_xyz(v))
        if method == "spectral":
            return _spectral_chord_potential(self._rho_coeffs, self.grid.B, v)
        raise ValueError(method)

    @cached_property
    def _south_potential(self) -> float:
        return float(self.chord_potential(np.array([[0.0, 0.0, -1.0]]))[0])

    @cached_property
    def mean_log1p(self) -> float:
        """m_g(ln(1 + |z|^2)), via ln(1+|y|^2) = 2 ln 2 + 2(-ln chord(y, south))."""
        return 2.0 * LN2 + 2.0 * self._south_potential / self.volume

    def log_mean(self, z, method: str = "direct") -> np.ndarray:
        """m_g(ln 1/|x - .|) at planar points x."""
        z = np.atleast_1d(as_complex(z))
        V = self.chord_potential(z, method=method)
        return V / self.volume + LN2 - 0.5 * np.log1p(np.abs(z) ** 2) - 0.5 * self.mean_log1p

    @cached_property
    def log_mean_nodes(self) -> np.ndarray:
        z = self.grid.z
        return (self.chord_potential_nodes / self.volume + LN2
                - 0.5 * np.log1p(np.abs(z) ** 2) - 0.5 * self.mean_log1p)

    @cached_property
    def theta(self) -> float:
        """theta_g: double lambda_g-average of ln 1/|z - z'| (direct quadrature)."""
        chord_mean = float(self.weights @ self.chord_potential_nodes) / self.volume ** 2
        return chord_mean + LN2 - self.mean_log1p

    @cached_property
    def theta_spectral(self) -> float:
        c = self._rho_coeffs
        l = degrees(self.grid.B)
        tot = c[0] * np.sqrt(4 * np.pi)
        quad = (0.5 - LN2) * tot ** 2 + np.sum(2 * np.pi / (l[1:] * (l[1:] + 1.0)) * c[1:] ** 2)
        south = _spectral_chord_potential(c, self.grid.B, np.array([[0.0, 0.0, -1.0]]))[0]
        mlog = 2 * LN2 + 2 * south / tot
        return quad / tot ** 2 + LN2 - mlog

    def green(self, x, y) -> np.ndarray:
        """G_g(x, y) = ln 1/|x-y| - m_g(ln 1/|x-.|) - m_g(ln 1/|y-.|) + theta_g."""
        x = np.atleast_1d(as_complex(x))
        y = np.atleast_1d(as_complex(y))
        d = np.abs(x - y)
        if np.any(d == 0):
            raise SingularityError("green_general evaluated on the diagonal")
        return -np.log(d) - self.log_mean(x) - self.log_mean(y) + self.theta

    # curvature and energies
    def phi_coeffs(self, L: int | None = None, tol: float = 1e-9) -> np.ndarray:
        """Spherical-harmonic coefficients of phi; raises if not resolved."""
        B = self.grid.B
        c = Transform(B, self.grid).analyze(self.phi)
        l = degrees(B)
        top = l > (B if L is None else L) - max(2, B // 8)
        total = np.sum(c ** 2) + 1e-300
        if np.sum(c[top] ** 2) / total > tol ** 2 and np.sqrt(np.sum(c[top] ** 2)) > tol:
            raise ResolutionError("conformal factor is not resolved by the grid band limit")
        return c

    def laplacian_phi(self) -> np.ndarray:
        c = self.phi_coeffs()
        l = degrees(self.grid.B)
        return Transform(self.grid.B, self.grid).synthesize(-(l * (l + 1.0)) * c)

    def curvature(self) -> np.ndarray:
        """R_g = exp(-phi) (2 - Laplacian(phi)) at the nodes."""
        return np.exp(-self.phi) * (2.0 - self.laplacian_phi())

    def dirichlet_energy(self) -> float:
        """int |grad phi|^2 (conformally invariant), spectrally."""
        c = self.phi_coeffs()
        l = degrees(self.grid.B)
        return float(np.sum(l * (l + 1.0) * c ** 2))

    def dirichlet_energy_flat(self) -> float:
        """Same energy as a flat-chart integral of |grad phi|^2 dx dy.

        The pointwise squared gradient comes from
        |grad phi|^2_ghat = Lap(phi^2)/2 - phi Lap(phi); the flat gradient is
        ghat times that and the Lebesgue element is d lambda_ghat / ghat.
        """
        B = self.grid.B
        T = Transform(B, self.grid)
        l = degrees(B)
        lap = lambda f: T.synthesize(-(l * (l + 1.0)) * T.analyze(f))
        grad2 = 0.5 * lap(self.phi ** 2) - self.phi * lap(self.phi)
        gh = round_density(self.grid.z)
        flat_grad2 = gh * grad2
        lebesgue = self.grid.weights / gh
        return float(np.dot(flat_grad2, lebesgue))


def _eval_coeffs_xyz(coeffs: np.ndarray, L: int, v: np.ndarray) -> np.ndarray:
    v = np.atleast_2d(v)
    x = np.clip(v[:, 2], -1.0, 1.0)
    ph = np.arctan2(v[:, 1], v[:, 0])
    tab = legendre_table(L, x)
    out = np.zeros(x.size)
    for m in range(L + 1):
        ls = np.arange(m, L + 1)
        out += coeffs[coeff_index(ls, m)] @ tab[m] * (1.0 if m == 0 else np.sqrt(2) * np.cos(m * ph))
        if m:
            out += coeffs[coeff_index(ls, -m)] @ tab[m] * np.sqrt(2) * np.sin(m * ph)
    return out


def _spectral_chord_potential(coeffs: np.ndarray, L: int, v: np.ndarray) -> np.ndarray:
    """Funk-Hecke evaluation: -ln chord has eigenvalue 2 pi/(l(l+1)) for l >= 1."""
    l = degrees(L)
    mult = np.zeros_like(coeffs)
    mult[1:] = 2 * np.pi / (l[1:] * (l[1:] + 1.0))
    out = _eval_coeffs_xyz(coeffs * mult, L, v)
    return out + (0.5 - LN2) * coeffs[0] * np.sqrt(4 * np.pi)


def round_metric(B: int = 128) -> ConformalMetric:
    return ConformalMetric.round(SphereGrid(B))


def metric_mean(h, g: ConformalMetric) -> float:
    return g.mean(h)


def theta(g: ConformalMetric) -> float:
    return g.theta


def green_general(x, y, g: ConformalMetric):
    return g.green(x, y)


def d_psi(psi: MobiusMap, grid: SphereGrid) -> float:
    """D_psi = (4 pi)^-2 double integral of G_ghat against lambda_{ghat_psi}^2."""
    g = ConformalMetric.from_mobius(grid, psi)
    V = g.chord_potential_nodes
    return float((g.weights @ V) / (4 * np.pi) ** 2
                 + (LN2 - 0.5) * (g.volume / (4 * np.pi)) ** 2)


def log_potential_identity_check(psi: MobiusMap, x, grid: SphereGrid) -> float:
    """|int ln|x-.| d lambda_{g_psi} - 2 pi (ln(|ax+b|^2+|cx+d|^2) - ln(|a|^2+|c|^2))|.

    The closed form holds for every map including c = 0 (affine maps),
    where the right side reduces to 2 pi (ln(|ax+b|^2 + |d|^2) - ln|a|^2).
    """
    g = ConformalMetric.from_mobius(grid, psi)
    z = np.atleast_1d(as_complex(x))
    lhs = -g.volume * g.log_mean(z)
    a, b, c, d = psi.params
    rhs = 2 * np.pi * (np.log(np.abs(a * z + b) ** 2 + np.abs(c * z + d) ** 2)
                       - np.log(abs(a) ** 2 + abs(c) ** 2))
    return float(np.max(np.abs(lhs - rhs)))


def round_log_mean_residual(g: ConformalMetric, z) -> float:
    """|m_ghat(ln 1/|x-.|) - (ln ghat(x)/4 - ln 2 / 2)| for the round metric."""
    z = np.atleast_1d(as_complex(z))
    return float(np.max(np.abs(g.log_mean(z) - (0.25 * log_round_density(z) - 0.5 * LN2))))


def mobius_log_mean_residual(psi: MobiusMap, z, grid: SphereGrid,
                              theta_round: float | None = None) -> float:
    """Residual of -2 m_{g_psi}(ln 1/|x-.|) + theta_{g_psi}
    = -ln ghat(psi x)/2 - ln|psi'(x)| + theta_ghat + ln 2."""
    g = ConformalMetric.from_mobius(grid, psi)
    z = np.atleast_1d(as_complex(z))
    th0 = ConformalMetric.round(grid).theta if theta_round is None else theta_round
    lhs = -2 * g.log_mean(z) + g.theta
    rhs = -0.5 * log_round_density(psi(z)) - np.log(np.abs(psi.derivative(z))) + th0 + LN2
    return float(np.max(np.abs(lhs - rhs)))


# ----------------------------------------------------------------------------
# identity suite

SUITE_MAP = (1 + 0.3j, 0.5, -0.4 + 0.2j, 1.2)
SUITE_POINTS = (0.3 + 0.2j, -0.7 + 0.5j, 1.4 - 0.9j, 0.05 - 0.1j)


def identity_suite(B: int = 128, psi: MobiusMap | None = None, points=SUITE_POINTS,
                   quad_tol: float = 1e-3, exact_tol: float = 1e-10) -> dict:
    """Residuals of the conformal identities; quadrature-backed and closed-form rows."""
    grid = SphereGrid(B)
    psi = MobiusMap(*SUITE_MAP) if psi is None else psi
    z = np.asarray(points, dtype=complex)
    g0 = ConformalMetric.round(grid)
    gp = ConformalMetric.from_mobius(grid, psi)
    rows = {}
    rows["log_potential_identity"] = (log_potential_identity_check(psi, z, grid), "quadrature")
    rows["round_log_mean"] = (round_log_mean_residual(g0, z), "quadrature")
    rows["mobius_log_mean"] = (mobius_log_mean_residual(psi, z, grid, THETA_ROUND), "quadrature")
    rows["theta_round"] = (abs(g0.theta - THETA_ROUND), "quadrature")
    rows["d_psi"] = (abs(d_psi(psi, grid) + 0.5 * grid.integrate(gp.phi) / (4 * np.pi)), "quadrature")
    rows["gauss_bonnet"] = (abs(float(gp.curvature() @ gp.weights) - 8 * np.pi), "quadrature")
    zz, ww = z[:, None], z[None, :]
    off = ~np.eye(z.size, dtype=bool)
    rows["green_rule"] = (green_mobius_rule_check(psi, np.broadcast_to(zz, (z.size,) * 2)[off],
                                                  np.broadcast_to(ww, (z.size,) * 2)[off]), "closed-form")
    cr0 = cross_ratio(*z)
    cr1 = cross_ratio(*psi(z))
    rows["cross_ratio"] = (float(abs(cr1 - cr0) / abs(cr0)), "closed-form")
    out = {}
    for k, (v, kind) in rows.items():
        tol = quad_tol if kind == "quadrature" else exact_tol
        out[k] = {"residual": float(v), "kind": kind, "tol": tol, "passed": bool(v < tol)}
    return out
