"""Gaussian free field on the sphere with vanishing metric mean.

Two samplers:
  * sample_spectral: band-limited spherical-harmonic series
        X_L = sum_{1<=l<=L} sum_m sqrt(2 pi / (l (l+1))) xi_lm Y_lm,
    whose covariance is the degree-truncated series of the round Green
    function (the l = 0 mode is absent, so the round mean vanishes);
  * sample_exact: Gaussian vector on a point set with covariance given by
    the Green function of any conformal metric (Cholesky of the Gram matrix).

Fields in another metric g are obtained by recentering, X_g = X - m_g(X).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .estimators import replica_rng
from .geometry import ConformalMetric, as_complex, log_round_density, LN2, unit_vector
from .harmonics import SphereGrid, Transform, degrees, n_coeffs, real_harmonics

EULER_GAMMA = 0.5772156649015329


def mode_scale(L: int) -> np.ndarray:
    """Standard deviation of each coefficient slot of X_L (0 for l = 0)."""
    l = degrees(L).astype(float)
    out = np.zeros_like(l)
    out[1:] = np.sqrt(2.0 * np.pi / (l[1:] * (l[1:] + 1.0)))
    return out


def truncated_variance(L: int) -> float:
    """sigma_L^2 = sum_{l<=L} (2l+1)/(2l(l+1)), identical at every point."""
    l = np.arange(1, L + 1, dtype=float)
    return float(np.sum((2 * l + 1) / (2 * l * (l + 1))))


def truncated_covariance_angle(L: int, cos_t) -> np.ndarray:
    """C_L as a function of the cosine of the angular distance."""
    cos_t = np.asarray(cos_t, dtype=float)
    l = np.arange(1, L + 1)
    coef = (2 * l + 1) / (2.0 * l * (l + 1))
    # Legendre recurrence, vectorized over points
    p0 = np.ones_like(cos_t)
    p1 = cos_t.copy()
    out = coef[0] * p1
    for k in range(2, L + 1):
        p0, p1 = p1, ((2 * k - 1) * cos_t * p1 - (k - 1) * p0) / k
        out = out + coef[k - 1] * p1
    return out


def truncated_covariance(L: int, z, w) -> np.ndarray:
    u = unit_vector(np.atleast_1d(as_complex(z)))
    v = unit_vector(np.atleast_1d(as_complex(w)))
    return truncated_covariance_angle(L, np.clip(np.sum(u * v, axis=-1), -1, 1))


def effective_cutoff(L: int) -> float:
    """Chordal radius eps with sigma_L^2 ~ -ln eps + ln 2 - 1/2 (round metric)."""
    return float(np.exp(LN2 - 0.5 - truncated_variance(L)))


# ----------------------------------------------------------------------------

@dataclass
class SpectralFieldSample:
    """Coefficients of one or more replicas of X_L (rows = replicas)."""
    L: int
    coeffs: np.ndarray
    seed: int | None = None
    stream: int | None = None
    replicas: tuple = ()

    @property
    def variance(self) -> float:
        return truncated_variance(self.L)

    def truncate(self, L: int) -> "SpectralFieldSample":
        if L > self.L:
            raise ValueError("cannot raise the band limit of a sample")
        return SpectralFieldSample(L, self.coeffs[..., : n_coeffs(L)], self.seed,
                                   self.stream, self.replicas)

    def values(self, transform: Transform) -> np.ndarray:
        if transform.L != self.L:
            raise ValueError("transform band limit differs from the sample band limit")
        return transform.synthesize(self.coeffs)

    def at(self, z) -> np.ndarray:
        """Off-grid values by direct harmonic evaluation."""
        Y = real_harmonics(self.L, np.atleast_1d(as_complex(z)))
        return self.coeffs @ Y.T

    def node_variance(self, grid: SphereGrid) -> np.ndarray:
        return np.full(grid.size, self.variance)

    # binary dump: little-endian header {L u32, seed u64, count u32}, then
    # count * (L+1)^2 float64 coefficients, replica-major
    def to_bytes(self) -> bytes:
        c = np.ascontiguousarray(np.atleast_2d(self.coeffs), dtype="<f8")
        head = struct.pack("<IQI", self.L, int(self.seed or 0), c.shape[0])
        return head + c.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "SpectralFieldSample":
        L, seed, count = struct.unpack_from("<IQI", buf, 0)
        off = struct.calcsize("<IQI")
        c = np.frombuffer(buf, dtype="<f8", offset=off).reshape(count, n_coeffs(L))
        return cls(L, c.copy(), seed)


def draw_coefficients(L: int, seed: int, stream: int, replicas) -> np.ndarray:
    """Scaled coefficient rows for the given replica indices.

    Each replica draws (L+1)^2 standard normals in degree-major order from its
    own generator, so a lower band limit from the same (seed, stream, replica)
    is exactly a truncation.
    """
    replicas = np.atleast_1d(replicas)
    scale = mode_scale(L)
    out = np.empty((replicas.size, n_coeffs(L)))
    for k, r in enumerate(replicas):
        out[k] = replica_rng(seed, stream, int(r)).standard_normal(n_coeffs(L))
    return out * scale


def sample_spectral(L: int, seed: int, stream: int = 0, replicas=(0,)) -> SpectralFieldSample:
    if L < 1:
        raise ValueError("band limit must be >= 1")
    replicas = tuple(int(r) for r in np.atleast_1d(replicas))
    return SpectralFieldSample(L, draw_coefficients(L, seed, stream, replicas), seed, stream,
                               replicas)


# ----------------------------------------------------------------------------

def mean_functional(L: int, g: ConformalMetric) -> np.ndarray:
    """Vector a with m_g(sum c_lm Y_lm) = a . c (l = 0 slot included)."""
    T = Transform(L, g.grid)
    return T.analyze(g.rho) / g.volume


def recenter(sample, g: ConformalMetric, L: int | None = None):
    """Subtract the lambda_g mean.

    Accepts node values (last axis = grid nodes of g) or a SpectralFieldSample,
    for which a new coefficient set is returned with the mean removed through
    the constant mode.
    """
    if isinstance(sample, SpectralFieldSample):
        a = mean_functional(sample.L, g)
        m = sample.coeffs @ a
        c = sample.coeffs.copy()
        c[..., 0] -= m * np.sqrt(4 * np.pi)
        return SpectralFieldSample(sample.L, c, sample.seed, sample.stream, sample.replicas)
    vals = np.asarray(sample, dtype=float)
    return vals - g.mean(vals)[..., None]


def metric_covariance(L: int, g: ConformalMetric, z, w) -> np.ndarray:
    """Covariance of the recentered truncated field X_L - m_g(X_L).

    C_{g,L}(x, y) = C_L(x, y) - u(x) - u(y) + c with u(x) = m_g(C_L(x, .)).
    """
    z = np.atleast_1d(as_complex(z))
    w = np.atleast_1d(as_complex(w))
    a = mean_functional(L, g) * (mode_scale(L) ** 2)
    Yz = real_harmonics(L, z)
    Yw = real_harmonics(L, w)
    # C_L(x, y) = sum s^2 Y(x) Y(y); u(x) = sum s^2 Y(x) m_g(Y)
    cz = truncated_covariance(L, z, w)
    uz = Yz @ a
    uw = Yw @ a
    m = mean_functional(L, g)
    c = float(np.sum(mode_scale(L) ** 2 * m * m))
    return cz - uz - uw + c


@dataclass
class PointSetSample:
    points: np.ndarray
    values: np.ndarray
    metric: ConformalMetric | None = None
    seed: int | None = None
    stream: int | None = None
    extra: dict = field(default_factory=dict)


class NumericalError(RuntimeError):
    pass


def gram_matrix(points, g: ConformalMetric, L: int | None = None) -> np.ndarray:
    """Green-function Gram matrix; the diagonal carries the truncated variance.

    Off-diagonal entries are G_g(x_i, x_j).  The diagonal is the variance of
    the band-L field in metric g (exact spectral value, default L = 128).
    """
    z = np.asarray(as_complex(points), dtype=complex).ravel()
    n = z.size
    if len(np.unique(z)) != n:
        raise ValueError("points must be pairwise distinct")
    Lv = 128 if L is None else L
    lm = g.log_mean(z)
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, 1.0)
    G = -np.log(d) - lm[:, None] - lm[None, :] + g.theta
    diag = metric_covariance(Lv, g, z, z)
    np.fill_diagonal(G, diag)
    return G


def sample_exact(points, g: ConformalMetric, seed: int, stream: int = 0, size: int = 1,
                 L: int | None = None, jitter: float = 1e-10) -> PointSetSample:
    z = np.asarray(as_complex(points), dtype=complex).ravel()
    G = gram_matrix(z, g, L)
    G[np.diag_indices_from(G)] += jitter
    try:
        chol = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        ev = np.linalg.eigvalsh(G).min()
        raise NumericalError(f"Gram matrix not positive definite (min eigenvalue {ev:.3e})") from exc
    rng = replica_rng(seed, stream, 0)
    xi = rng.standard_normal((size, z.size))
    return PointSetSample(z, xi @ chol.T, g, seed, stream, {"L": L})


# ----------------------------------------------------------------------------
# circle averages

def circle_points(x, eps: float, n: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(n) / n
    return as_complex(x) + eps * np.exp(1j * t)


def circle_functional(L: int, x, eps: float, n: int | None = None) -> np.ndarray:
    """Coefficient-space vector v with X_eps(x) = c . v for X = sum c Y."""
    n = max(16, 4 * L) if n is None else n
    if n < max(16, 4 * L):
        raise ValueError("too few angular nodes for the band limit")
    return real_harmonics(L, circle_points(x, eps, n)).mean(axis=0)


def circle_average(sample: SpectralFieldSample, x, eps: float, n: int | None = None) -> np.ndarray:
    if eps <= 0:
        raise ValueError("radius must be positive")
    return sample.coeffs @ circle_functional(sample.L, x, eps, n)


def circle_variance_round(x, eps: float, n: int = 256) -> float:
    """E[X_eps(x)^2] for the continuum round field.

    The double circle average of ln 1/|z - z'| is exactly -ln eps; the rest of
    the Green function is smooth and integrated by the trapezoid rule.
    """
    pts = circle_points(x, eps, n)
    return float(-np.log(eps) - 0.5 * np.mean(log_round_density(pts)) + LN2 - 0.5)


def circle_variance_metric(x, eps: float, g: ConformalMetric, n: int = 64) -> float:
    """Same for G_g, the smooth part m_g(ln 1/|.-.|) evaluated by quadrature."""
    pts = circle_points(x, eps, n)
    return float(-np.log(eps) - 2 * np.mean(g.log_mean(pts)) + g.theta)


def circle_variance_truncated(L: int, x, eps: float, n: int | None = None) -> float:
    """Exact variance of the circle average of X_L."""
    v = circle_functional(L, x, eps, n)
    return float(np.sum((mode_scale(L) * v) ** 2))
