"""Gaussian multiplicative chaos on the sphere at finite resolution.

At band limit L the chaos is the normalized exponential of the truncated
field with its exact per-node variance,

    M_L(dx) = K_gamma exp(gamma X_L(x) - gamma^2 sigma_L^2 / 2) lambda_ghat(dx),

with K_gamma = exp((gamma^2/2)(theta_ghat + ln 2)).  The prefactor is what
the circle-average regularization eps^{gamma^2/2} e^{gamma(X_eps + Q/2 ln ghat)}
produces in the limit: E e^{gamma X_eps} = e^{(gamma^2/2)(-ln eps - ln ghat/2
+ theta + ln 2)} and ghat^{gamma Q/2 - gamma^2/4} = ghat.  Masses are cell
masses at the nodes of a grid that oversamples the field band.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .estimators import EstimatorResult, mean_result, replica_rng
from .geometry import LN2, THETA_ROUND, as_complex
from .gff import SpectralFieldSample, draw_coefficients, truncated_variance
from .harmonics import SphereGrid, Transform

LOG_MASS_MAX = 700.0


def q_of(gamma: float) -> float:
    return 2.0 / gamma + gamma / 2.0


def chaos_prefactor(gamma: float) -> float:
    """K_gamma = exp((gamma^2/2)(theta_ghat + ln 2))."""
    return float(np.exp(0.5 * gamma ** 2 * (THETA_ROUND + LN2)))


def chaos_prefactor_alternative(gamma: float) -> float:
    """The other parenthesization, 2 exp((gamma^2/2) theta_ghat); kept for rejection tests."""
    return float(2.0 * np.exp(0.5 * gamma ** 2 * THETA_ROUND))


def xi(gamma: float, q):
    """Multifractal exponent of the chaos mass of small balls."""
    q = np.asarray(q, dtype=float)
    return (2.0 + gamma ** 2 / 2.0) * q - gamma ** 2 * q ** 2 / 2.0


@dataclass(frozen=True)
class ChaosParams:
    gamma: float
    L: int
    B: int | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 2.0:
            raise ValueError("gamma must lie in (0, 2)")
        if self.L < 1:
            raise ValueError("band limit must be >= 1")

    @property
    def grid_band(self) -> int:
        return 2 * self.L if self.B is None else self.B

    @property
    def Q(self) -> float:
        return q_of(self.gamma)


_TRANSFORMS: dict = {}


def transform_for(L: int, B: int) -> Transform:
    """Shared, immutable transform per (L, B)."""
    key = (L, B)
    if key not in _TRANSFORMS:
        if len(_TRANSFORMS) > 4:
            _TRANSFORMS.pop(next(iter(_TRANSFORMS)))
        _TRANSFORMS[key] = Transform(L, SphereGrid(B))
    return _TRANSFORMS[key]


@dataclass
class ChaosMeasure:
    """Cell masses of one or more replicas (rows) over a grid."""
    masses: np.ndarray
    params: ChaosParams
    grid: SphereGrid
    seed: int | None = None
    replicas: tuple = ()

    @cached_property
    def total(self) -> np.ndarray:
        return self.masses.sum(axis=-1)

    def measure_of(self, region) -> np.ndarray:
        mask = region_mask(region, self.grid)
        return self.masses[..., mask].sum(axis=-1)

    def integrate(self, f) -> np.ndarray:
        """int f dM for node values f (broadcast over replicas)."""
        return np.sum(self.masses * np.asarray(f), axis=-1)

    def to_rows(self, replica: int = 0):
        """(node index, re, im, mass) rows for one replica."""
        m = np.atleast_2d(self.masses)[replica]
        z = self.grid.z
        return np.column_stack([np.arange(z.size), z.real, z.imag, m])


def log_masses(X: np.ndarray, gamma: float, L: int, grid: SphereGrid) -> np.ndarray:
    lm = (gamma * X - 0.5 * gamma ** 2 * truncated_variance(L)
          + np.log(chaos_prefactor(gamma)) + np.log(grid.weights))
    if np.max(lm) > LOG_MASS_MAX:
        raise OverflowError("chaos cell log-mass outside the representable range")
    return lm


def build_chaos(field: SpectralFieldSample, params: ChaosParams,
                transform: Transform | None = None) -> ChaosMeasure:
    if field.L != params.L:
        raise ValueError("field band limit differs from chaos band limit")
    T = transform or transform_for(params.L, params.grid_band)
    X = np.atleast_2d(T.synthesize(field.coeffs))
    m = np.exp(log_masses(X, params.gamma, params.L, T.grid))
    return ChaosMeasure(m, params, T.grid, field.seed, field.replicas)


def chaos_batches(params: ChaosParams, seed: int, stream: int, replicas: int,
                  batch: int = 200, start: int = 0):
    """Yield (replica indices, coefficient rows, ChaosMeasure) in batches."""
    T = transform_for(params.L, params.grid_band)
    for b0 in range(start, start + replicas, batch):
        idx = np.arange(b0, min(b0 + batch, start + replicas))
        c = draw_coefficients(params.L, seed, stream, idx)
        f = SpectralFieldSample(params.L, c, seed, stream, tuple(idx))
        yield idx, c, build_chaos(f, params, T)


# ----------------------------------------------------------------------------
# regions

@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def contains(self, z):
        return np.abs(np.asarray(z) - self.center) < self.radius


@dataclass(frozen=True)
class Complement:
    region: object

    def contains(self, z):
        return ~self.region.contains(z)


@dataclass(frozen=True)
class Union:
    parts: tuple

    def contains(self, z):
        out = np.zeros(np.shape(z), dtype=bool)
        for p in self.parts:
            out |= p.contains(z)
        return out


class Everything:
    def contains(self, z):
        return np.ones(np.shape(z), dtype=bool)


def region_mask(region, grid: SphereGrid) -> np.ndarray:
    if region is None:
        return np.ones(grid.size, dtype=bool)
    if isinstance(region, np.ndarray) and region.dtype == bool:
        return region
    return region.contains(grid.z)


def measure_of(M: ChaosMeasure, region) -> np.ndarray:
    return M.measure_of(region)


# ----------------------------------------------------------------------------
# diagnostics

def total_mass_moment(params: ChaosParams, replicas: int, seed: int, stream: int = 0,
                      batch: int = 200) -> EstimatorResult:
    totals = np.concatenate([M.total for _, _, M in
                             chaos_batches(params, seed, stream, replicas, batch)])
    return mean_result(totals, seed, (stream,), {"gamma": params.gamma, "L": params.L},
                       keep=True)


def negative_moment(params: ChaosParams, s: float, replicas: int, seed: int,
                    stream: int = 0, batch: int = 200) -> EstimatorResult:
    if s > 0:
        raise ValueError("negative_moment expects s <= 0")
    if s == 0:
        return EstimatorResult(1.0, 0.0, replicas, seed, (stream,), {"s": 0.0})
    totals = np.concatenate([M.total for _, _, M in
                             chaos_batches(params, seed, stream, replicas, batch)])
    return mean_result(totals ** s, seed, (stream,),
                       {"gamma": params.gamma, "L": params.L, "s": s})


def ball_masses(params: ChaosParams, radii, replicas: int, seed: int, stream: int = 0,
                center: complex = 0.0, batch: int = 100) -> np.ndarray:
    """Chaos mass of the planar balls B(center, r), shape (replicas, len(radii))."""
    radii = np.asarray(radii, dtype=float)
    T = transform_for(params.L, params.grid_band)
    d = np.abs(T.grid.z - center)
    masks = [d < r for r in radii]
    out = []
    for _, _, M in chaos_batches(params, seed, stream, replicas, batch):
        out.append(np.column_stack([M.masses[:, k].sum(axis=1) for k in masks]))
    return np.vstack(out)


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    radii: np.ndarray
    log_moments: np.ndarray
    kept: np.ndarray = field(default=None)


def fit_log_slope(samples: np.ndarray, scale, n_boot: int = 300, seed: int = 0) -> SlopeFit:
    """Slope of ln(column means of samples) against ln scale, bootstrap SE."""
    scale = np.asarray(scale, dtype=float)
    if scale.size < 3:
        raise ValueError("at least three radii are needed for a slope fit")
    x = np.log(scale)

    def slope(rows):
        return np.polyfit(x, np.log(rows.mean(axis=0)), 1)[0]

    s = slope(samples)
    rng = np.random.default_rng(seed)
    n = samples.shape[0]
    boots = [slope(samples[rng.integers(0, n, n)]) for _ in range(n_boot)]
    return SlopeFit(float(s), float(np.std(boots, ddof=1)), scale, np.log(samples.mean(axis=0)))


def fit_moment_slope(masses: np.ndarray, radii, q: float, n_boot: int = 300,
                     seed: int = 0, scale=None) -> SlopeFit:
    """Least-squares slope of ln E[M(B_r)^q] against ln r, bootstrap SE.

    scale, if given, replaces r as the regressor (same length as radii).
    """
    radii = np.asarray(radii, dtype=float)
    fit = fit_log_slope(masses ** q, radii if scale is None else scale, n_boot, seed)
    fit.radii = radii
    return fit


def size_biased_ball_moments(params: ChaosParams, radii, q: float, replicas: int, seed: int,
                             stream: int = 0, center: complex = 0.0, batch: int = 100) -> np.ndarray:
    """Per-replica samples whose means are E[M(B_r)^q], by size biasing.

    E[M(B)^q] = K lambda(B) E[Mx(B)^{q-1}], where x is a node of B drawn with
    probability proportional to its weight and Mx is the chaos of the field
    shifted by gamma C_L(x, .) (Girsanov), i.e. Mx(dy) = e^{gamma^2 C_L(x,y)} M(dy).
    Exact at the discrete level; for q = 2 its variance involves the third
    moment instead of the fourth.
    """
    from .gff import truncated_covariance_angle
    radii = np.asarray(radii, dtype=float)
    T = transform_for(params.L, params.grid_band)
    grid = T.grid
    d = np.abs(grid.z - center)
    masks = [np.flatnonzero(d < r) for r in radii]
    K = chaos_prefactor(params.gamma)
    U = grid.unit_vectors
    out = np.empty((replicas, radii.size))
    for idx, _, M in chaos_batches(params, seed, stream, replicas, batch):
        # one uniform per (replica, radius) from the replica's own generator
        u = np.array([replica_rng(seed, stream + 5000, int(r)).random(radii.size) for r in idx])
        for k, nodes in enumerate(masks):
            w = grid.weights[nodes]
            lam = w.sum()
            cdf = np.cumsum(w) / lam
            xs = nodes[np.minimum(np.searchsorted(cdf, u[:, k]), nodes.size - 1)]
            C = truncated_covariance_angle(params.L, np.clip(U[xs] @ U[nodes].T, -1, 1))
            mx = np.sum(M.masses[:, nodes] * np.exp(params.gamma ** 2 * C), axis=1)
            out[idx, k] = K * lam * mx ** (q - 1)
    return out


def scaling_exponent_fit(gamma: float, q: float, radii, replicas: int, L: int = 128,
                         seed: int = 1, stream: int = 0, B: int | None = None,
                         min_nodes: int = 50, method: str = "auto") -> SlopeFit:
    """Fit of ln E[M(B(0, r))^q] against the log effective radius.

    Plain sample moments for q <= 1; the size-biased estimator for q > 1,
    where plain sample means of heavy-tailed M^q underestimate the small balls.
    """
    if not 0 < q < 4 / gamma ** 2:
        raise ValueError("q must lie in (0, 4/gamma^2)")
    params = ChaosParams(gamma, L, B)
    radii = np.sort(np.asarray(radii, dtype=float))
    grid = transform_for(params.L, params.grid_band).grid
    counts = np.array([(np.abs(grid.z) < r).sum() for r in radii])
    keep = counts >= min_nodes
    radii = radii[keep]
    if radii.size < 3:
        raise ValueError("fewer than three radii resolved by the grid")
    rho = effective_radius(grid, radii)
    if method == "auto":
        method = "size-biased" if q > 1 else "plain"
    if method == "plain":
        fit = fit_log_slope(ball_masses(params, radii, replicas, seed, stream) ** q, rho)
    elif method == "size-biased":
        fit = fit_log_slope(size_biased_ball_moments(params, radii, q, replicas, seed, stream), rho)
    else:
        raise ValueError(method)
    fit.radii = radii
    fit.kept = keep
    return fit


def effective_radius(grid: SphereGrid, radii, center: complex = 0.0) -> np.ndarray:
    """Chordal radius of the cap whose area equals the discrete ball area.

    A cap of chordal radius rho has area pi rho^2 exactly, so regressing on
    this radius removes the ring quantization of the grid from the fit; the
    q = 1 slope is then exactly 2 in expectation.
    """
    d = np.abs(grid.z - center)
    area = np.array([grid.weights[d < r].sum() for r in np.atleast_1d(radii)])
    return np.sqrt(area / np.pi)


def second_moment_ball(params: ChaosParams, r: float, center: complex = 0.0) -> float:
    """Deterministic E[M_L(B_r)^2] = K^2 sum_ij w_i w_j exp(gamma^2 C_L(x_i, x_j))."""
    from .gff import truncated_covariance_angle
    grid = transform_for(params.L, params.grid_band).grid
    sel = np.abs(grid.z - center) < r
    U = grid.unit_vectors[sel]
    w = grid.weights[sel]
    K = chaos_prefactor(params.gamma)
    tot = 0.0
    for i0 in range(0, len(w), 1024):
        C = truncated_covariance_angle(params.L, np.clip(U[i0:i0 + 1024] @ U.T, -1, 1))
        tot += w[i0:i0 + 1024] @ np.exp(params.gamma ** 2 * C) @ w
    return float(K ** 2 * tot)


def mobius_pushforward_sample(M: ChaosMeasure, X: np.ndarray, psi, f, g_psi_mean) -> np.ndarray:
    """e^{-gamma m_{ghat_psi}(X)} int f(psi x) e^{gamma Q phi(x)/2} dM(x), per replica."""
    gamma = M.params.gamma
    z = M.grid.z
    phi = psi.conformal_factor(z)
    w = f(psi(z)) * np.exp(0.5 * gamma * q_of(gamma) * phi)
    return np.exp(-gamma * g_psi_mean(X)) * M.integrate(w)


def chaos_mobius_law_check(psi, f, replicas: int, gamma: float = 1.0, L: int = 64,
                           seed: int = 3, batch: int = 200):
    """Two-sample KS test of int f dM against its Moebius-transformed version.

    Sample A: int f dM_gamma from stream 0.
    Sample B: e^{-gamma m_{ghat_psi}(X)} int f o psi e^{gamma Q phi/2} dM_gamma
              from an independent stream 1.
    """
    from scipy.stats import ks_2samp
    from .geometry import ConformalMetric
    params = ChaosParams(gamma, L)
    T = transform_for(L, params.grid_band)
    z = T.grid.z
    fa = f(z)
    gpsi = ConformalMetric.from_mobius(T.grid, psi)
    A, Bs = [], []
    for _, _, M in chaos_batches(params, seed, 0, replicas, batch):
        A.append(M.integrate(fa))
    phi = psi.conformal_factor(z)
    wb = f(psi(z)) * np.exp(0.5 * gamma * params.Q * phi)
    for _, c, M in chaos_batches(params, seed, 1, replicas, batch):
        X = T.synthesize(c)
        Bs.append(np.exp(-gamma * gpsi.mean(X)) * M.integrate(wb))
    A, Bs = np.concatenate(A), np.concatenate(Bs)
    res = ks_2samp(A, Bs)
    return res.statistic, res.pvalue, A, Bs
