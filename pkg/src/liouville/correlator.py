"""Vertex-operator correlation functions on the round sphere.

For insertions (z_i, alpha_i) satisfying the Seiberg bounds the partition
function factorizes as

    Pi = mu^{-s/gamma} e^{C(z)} prod_i ghat(z_i)^{Delta_i} gamma^{-1} Gamma(s/gamma)
         E[Z0^{-s/gamma}],     s = sum alpha_i - 2Q,

with Z0 = int e^{gamma H} dM_gamma and H = sum alpha_i G(z_i, .).  At band
limit L the insertion shift is the truncated Green function
H_L = sum alpha_i C_L(z_i, .), which is the exact Girsanov shift of the
truncated vertex operators exp(alpha X_L - alpha^2 sigma_L^2 / 2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln

from .estimators import EstimatorResult, mean_result
from .geometry import LN2, THETA_ROUND, MobiusMap, SingularityError, as_complex, green_round, log_round_density
from .gff import mode_scale, truncated_covariance
from .gmc import ChaosMeasure, ChaosParams, chaos_batches, q_of, transform_for
from .harmonics import real_harmonics


class SeibergError(ValueError):
    def __init__(self, report):
        super().__init__(f"Seiberg bounds fail: {report}")
        self.report = report


class RepositionError(ValueError):
    pass


@dataclass(frozen=True)
class Insertion:
    z: complex
    alpha: float


def conformal_weight(alpha, Q):
    return 0.5 * np.asarray(alpha) * (Q - 0.5 * np.asarray(alpha))


@dataclass
class InsertionSet:
    insertions: list
    gamma: float
    mu: float = 1.0

    def __post_init__(self):
        self.insertions = [i if isinstance(i, Insertion) else Insertion(complex(i[0]), float(i[1]))
                           for i in self.insertions]
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        z = self.z
        if len(set(z.tolist())) != len(z):
            raise ValueError("insertion points must be pairwise distinct")

    @classmethod
    def parse(cls, text: str, gamma: float, mu: float = 1.0) -> "InsertionSet":
        """'re,im,alpha;re,im,alpha;...'"""
        ins = []
        for part in text.replace(" ", "").strip(";").split(";"):
            if not part:
                continue
            re_, im_, a = (float(v) for v in part.split(","))
            ins.append(Insertion(complex(re_, im_), a))
        return cls(ins, gamma, mu)

    @property
    def z(self) -> np.ndarray:
        return np.array([i.z for i in self.insertions], dtype=complex)

    @property
    def alpha(self) -> np.ndarray:
        return np.array([i.alpha for i in self.insertions], dtype=float)

    @property
    def Q(self) -> float:
        return q_of(self.gamma)

    @property
    def s(self) -> float:
        return float(self.alpha.sum() - 2 * self.Q)

    @property
    def weights(self) -> np.ndarray:
        return conformal_weight(self.alpha, self.Q)

    @property
    def central_charge(self) -> float:
        return 1 + 6 * self.Q ** 2

    def with_mu(self, mu: float) -> "InsertionSet":
        return InsertionSet(list(self.insertions), self.gamma, mu)

    def mapped(self, psi: MobiusMap) -> "InsertionSet":
        pts = []
        for i in self.insertions:
            if psi.c != 0 and abs(psi.c * i.z + psi.d) < 1e-12:
                raise RepositionError(f"insertion {i.z} is mapped to infinity")
            pts.append(Insertion(complex(psi(i.z)), i.alpha))
        return InsertionSet(pts, self.gamma, self.mu)

    def describe(self) -> dict:
        return {"gamma": self.gamma, "mu": self.mu,
                "insertions": [[i.z.real, i.z.imag, i.alpha] for i in self.insertions]}


@dataclass
class SeibergReport:
    sum_bound: bool
    each_bound: bool
    sum_margin: float
    each_margin: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.sum_bound and self.each_bound

    def as_dict(self) -> dict:
        return {"passed": self.passed, "sum_bound": self.sum_bound, "each_bound": self.each_bound,
                "sum_margin": self.sum_margin, "each_margin": self.each_margin}


BOUNDARY_TOL = 1e-12


def seiberg_check(iset: InsertionSet) -> SeibergReport:
    """sum alpha_i > 2Q and alpha_i < Q for every i (strict).

    Margins within BOUNDARY_TOL * Q of zero count as the boundary, which fails.
    """
    a = iset.alpha
    tol = BOUNDARY_TOL * iset.Q
    sm = float(a.sum() - 2 * iset.Q)
    em = [float(iset.Q - v) for v in a]
    if abs(sm) <= tol:
        sm = 0.0
    em = [0.0 if abs(m) <= tol else m for m in em]
    return SeibergReport(sm > 0, all(m > 0 for m in em), sm, em)


def unit_volume_condition(iset: InsertionSet) -> dict:
    """Q - sum alpha/2 < min(2/gamma, min_i(Q - alpha_i)), strictly."""
    a = iset.alpha
    if np.any(a >= iset.Q):
        raise ValueError("unit-volume condition requires alpha_i < Q")
    lhs = iset.Q - a.sum() / 2
    rhs = min(2 / iset.gamma, float(np.min(iset.Q - a)))
    return {"passed": bool(lhs < rhs), "lhs": float(lhs), "rhs": float(rhs),
            "margin": float(rhs - lhs)}


def insertion_potential(iset: InsertionSet, x) -> np.ndarray:
    x = np.atleast_1d(as_complex(x))
    if not iset.insertions:
        return np.zeros(x.shape)
    out = np.zeros(x.shape)
    for i in iset.insertions:
        if np.any(x == i.z):
            raise SingularityError("insertion potential evaluated at an insertion")
        out += i.alpha * green_round(i.z, x)
    return out


def log_prefactor_C(iset: InsertionSet) -> float:
    """C(z) = (1/2) sum_{i != j} a_i a_j G(z_i, z_j) + (theta + ln 2)/2 sum a_i^2."""
    a, z = iset.alpha, iset.z
    tot = 0.5 * (THETA_ROUND + LN2) * float(np.sum(a ** 2))
    for i in range(len(a)):
        for j in range(len(a)):
            if i != j:
                tot += 0.5 * a[i] * a[j] * float(green_round(z[i], z[j]))
    return tot


def log_prefactor_C_truncated(iset: InsertionSet, L: int) -> float:
    """Band-L version: the pair Green function replaced by C_L."""
    a, z = iset.alpha, iset.z
    tot = 0.5 * (THETA_ROUND + LN2) * float(np.sum(a ** 2))
    for i in range(len(a)):
        for j in range(len(a)):
            if i != j:
                tot += 0.5 * a[i] * a[j] * float(truncated_covariance(L, z[i], z[j])[0])
    return tot


def insertion_coeffs(iset: InsertionSet, L: int) -> np.ndarray:
    """Harmonic coefficients of H_L = sum alpha_i C_L(z_i, .)."""
    if not iset.insertions:
        return np.zeros((L + 1) ** 2)
    Y = real_harmonics(L, iset.z)
    return (iset.alpha @ Y) * mode_scale(L) ** 2


def insertion_field(iset: InsertionSet, L: int, B: int | None = None) -> np.ndarray:
    T = transform_for(L, 2 * L if B is None else B)
    return T.synthesize(insertion_coeffs(iset, L))


def z0_from_chaos(iset: InsertionSet, chaos: ChaosMeasure, H: np.ndarray | None = None) -> np.ndarray:
    """Z0 = sum over cells of e^{gamma H_L(node)} * mass, per replica."""
    if H is None:
        H = insertion_field(iset, chaos.params.L, chaos.params.grid_band)
    return chaos.masses @ np.exp(iset.gamma * H)


z0_sample = z0_from_chaos


def z0_samples(isets, L: int, replicas: int, seed: int, stream: int = 0,
               B: int | None = None, batch: int = 200, start: int = 0) -> np.ndarray:
    """Z0 for several insertion sets on shared field replicas; shape (replicas, n_sets)."""
    isets = list(isets)
    gamma = isets[0].gamma
    if any(abs(i.gamma - gamma) > 0 for i in isets):
        raise ValueError("insertion sets must share gamma")
    params = ChaosParams(gamma, L, B)
    Hs = np.stack([np.exp(gamma * insertion_field(i, L, params.grid_band)) for i in isets], axis=1)
    out = []
    for _, _, M in chaos_batches(params, seed, stream, replicas, batch, start):
        out.append(M.masses @ Hs)
    return np.vstack(out)


def log_deterministic_factor(iset: InsertionSet, prefactor: str = "continuum",
                             L: int | None = None) -> float:
    """ln of mu^{-s/gamma} e^{C} prod ghat^{Delta} gamma^{-1} Gamma(s/gamma)."""
    rep = seiberg_check(iset)
    if not rep.passed:
        raise SeibergError(rep.as_dict())
    g, s = iset.gamma, iset.s
    C = log_prefactor_C(iset) if prefactor == "continuum" else log_prefactor_C_truncated(iset, L)
    return float(-(s / g) * np.log(iset.mu) + C
                 + np.sum(iset.weights * log_round_density(iset.z))
                 - np.log(g) + gammaln(s / g))


def partition_from_z0(iset: InsertionSet, z0: np.ndarray, prefactor: str = "continuum",
                      L: int | None = None, seed=None, streams=()) -> EstimatorResult:
    """Assemble the reduced partition function from Z0 replicas."""
    logdet = log_deterministic_factor(iset, prefactor, L)
    mom = mean_result(np.asarray(z0) ** (-iset.s / iset.gamma))
    if mom.rel_err > 0.2:
        raise RuntimeError(f"negative-moment estimator too noisy (SE/mean = {mom.rel_err:.2f})")
    val = np.exp(logdet) * mom.estimate
    return EstimatorResult(float(val), float(val * mom.rel_err), mom.replicas, seed, tuple(streams),
                           {**iset.describe(), "log_factor": logdet, "moment": mom.estimate,
                            "moment_se": mom.stderr})


def partition_reduced(iset: InsertionSet, replicas: int = 2000, L: int = 64, seed: int = 7,
                      stream: int = 0, prefactor: str = "continuum") -> EstimatorResult:
    rep = seiberg_check(iset)
    if not rep.passed:
        raise SeibergError(rep.as_dict())
    z0 = z0_samples([iset], L, replicas, seed, stream)[:, 0]
    out = partition_from_z0(iset, z0, prefactor, L, seed, (stream,))
    out.params["L"] = L
    return out


def c_grid_for(iset: InsertionSet, z0: np.ndarray, n: int = 4001, tol: float = 1e-8):
    """Shared c-grid where e^{sc} exp(-mu e^{gamma c} Z) is above tol * peak for all replicas."""
    g, s, mu = iset.gamma, iset.s, iset.mu
    zlo, zhi = float(np.min(z0)), float(np.max(z0))
    # peak of e^{sc - mu e^{gc} Z} at e^{gc} = s/(g mu Z)
    lo = np.log(s / (g * mu * zhi)) / g
    hi = np.log(s / (g * mu * zlo)) / g
    width_lo = np.log(1 / tol) / s + 2.0
    # right tail: mu e^{gc} Z grows like e^{gc}; ln(ln(1/tol) + ...) is enough
    width_hi = (np.log(np.log(1 / tol) + s / g + 10.0) - np.log(s / g)) / g + 2.0
    return np.linspace(lo - width_lo, hi + width_hi, n)


def partition_raw_cross_check(iset: InsertionSet, z0: np.ndarray, c_grid=None,
                              tol: float = 1e-8) -> dict:
    """Numerical c-integral vs the closed-form Gamma reduction, same replicas.

    raw     = int e^{sc} mean_r[exp(-mu e^{gamma c} Z_r)] dc    (trapezoid)
    reduced = gamma^{-1} Gamma(s/gamma) mu^{-s/gamma} mean_r[Z_r^{-s/gamma}]
    """
    g, s, mu = iset.gamma, iset.s, iset.mu
    if s <= 0:
        raise SeibergError({"sum_margin": s, "detail": "c-integral diverges for s <= 0"})
    z0 = np.asarray(z0, dtype=float)
    c = c_grid_for(iset, z0) if c_grid is None else np.asarray(c_grid)
    lead = np.exp(s * c)
    inner = np.zeros_like(c)
    for k0 in range(0, z0.size, 500):
        zz = z0[k0:k0 + 500]
        inner += np.exp(-mu * np.exp(g * c)[:, None] * zz[None, :]).sum(axis=1)
    inner /= z0.size
    f = lead * inner
    peak = f.max()
    warn = bool(f[0] > tol * peak or f[-1] > tol * peak)
    raw = float(trapezoid(f, c))
    red = float(np.exp(gammaln(s / g) - np.log(g) - (s / g) * np.log(mu))
                * np.mean(z0 ** (-s / g)))
    return {"raw": raw, "reduced": red, "rel_discrepancy": abs(raw - red) / red,
            "truncation_warning": warn, "c_range": [float(c[0]), float(c[-1])], "n_c": int(c.size)}


def mobius_covariance_check(iset: InsertionSet, psi: MobiusMap, replicas: int = 2000,
                            L: int = 64, seed: int = 11, prefactor: str = "continuum",
                            z0_pair=None, shared_streams: bool = False,
                            paired: bool | None = None) -> EstimatorResult:
    """Ratio Pi(psi z) / (prod |psi'(z_i)|^{-2 Delta_i} Pi(z)); 1 in the continuum.

    The two sides use disjoint random streams (0 for z, 1 for psi z) unless
    shared_streams is set, in which case both use stream 0.  For paired
    replicas (shared streams, or a z0_pair built on common fields) the SE is
    the delta-method SE of the ratio of paired means.
    """
    rep = seiberg_check(iset)
    if not rep.passed:
        raise SeibergError(rep.as_dict())
    mapped = iset.mapped(psi)
    if z0_pair is None:
        z_rhs = z0_samples([iset], L, replicas, seed, 0)[:, 0]
        z_lhs = z0_samples([mapped], L, replicas, seed, 0 if shared_streams else 1)[:, 0]
    else:
        z_rhs, z_lhs = z0_pair
    lhs = partition_from_z0(mapped, z_lhs, prefactor, L)
    rhs = partition_from_z0(iset, z_rhs, prefactor, L)
    jac = float(np.sum(-2 * iset.weights * np.log(np.abs(psi.derivative(iset.z)))))
    ratio = lhs.estimate / (np.exp(jac) * rhs.estimate)
    if paired is None:
        paired = shared_streams or z0_pair is not None
    if paired:
        p = -iset.s / iset.gamma
        a, b = np.asarray(z_lhs) ** p, np.asarray(z_rhs) ** p
        se = ratio * np.std(a / a.mean() - b / b.mean(), ddof=1) / np.sqrt(a.size)
    else:
        se = ratio * np.hypot(lhs.rel_err, rhs.rel_err)
    return EstimatorResult(float(ratio), float(se), replicas, seed, (0,) if shared_streams else (0, 1),
                           {"map": [str(v) for v in psi.params], **iset.describe(), "L": L})


def seiberg_violation_study(iset: InsertionSet, Ls=(32, 64, 128, 256), replicas: int = 1000,
                            seed: int = 61, stream: int = 0, exponent: float | None = None,
                            n_boot: int = 1000, level: float = 0.05) -> dict:
    """E[Z0(L)^p] across band limits on nested common random numbers.

    Replica r uses the same (seed, stream, r) generator at every L, and a
    lower band limit is a truncation of the higher one, so the estimates are
    positively correlated and the paired bootstrap of the log-log slope is
    sharp.  p defaults to -s/gamma (needs s > 0).  The trend test is one-sided:
    slope < 0 with bootstrap p-value below level, plus strict decrease of
    every consecutive pair.
    """
    from scipy.stats import norm
    p = -iset.s / iset.gamma if exponent is None else exponent
    if p >= 0:
        raise ValueError("the moment exponent must be negative")
    Ls = tuple(sorted(Ls))
    vals = np.column_stack([z0_samples([iset], L, replicas, seed, stream)[:, 0] ** p for L in Ls])
    x = np.log(Ls)

    def slope(v):
        return np.polyfit(x, np.log(v.mean(axis=0)), 1)[0]

    b = slope(vals)
    rng = np.random.default_rng(seed)
    boots = np.array([slope(vals[rng.integers(0, replicas, replicas)]) for _ in range(n_boot)])
    se = float(boots.std(ddof=1))
    pval = float(norm.cdf(b / se)) if se > 0 else (0.0 if b < 0 else 1.0)
    means = vals.mean(axis=0)
    diffs = np.diff(vals, axis=1)
    d_mean = diffs.mean(axis=0)
    d_se = diffs.std(axis=0, ddof=1) / np.sqrt(replicas)
    return {"L": list(Ls), "exponent": p, "means": means.tolist(),
            "se": (vals.std(axis=0, ddof=1) / np.sqrt(replicas)).tolist(),
            "slope": float(b), "slope_se": se, "p_value": pval,
            "pair_diff": d_mean.tolist(), "pair_diff_se": d_se.tolist(),
            "strictly_decreasing": bool(np.all(d_mean < 0)),
            "passed": bool(pval < level and np.all(d_mean < 0)),
            "seiberg": seiberg_check(iset).as_dict()}
