"""Seeding and Monte Carlo result containers."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

import numpy as np

DEFAULT_SEED = 20240501
SEED_ENV = "LIOUVILLE_SEED"


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, DEFAULT_SEED))


def replica_rng(seed: int, stream: int, replica: int) -> np.random.Generator:
    """Independent generator for one replica of one stream.

    (seed, stream, replica) fully determines the draws, so results do not
    depend on how replicas are batched or distributed over workers.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(replica)))
    return np.random.Generator(np.random.PCG64(ss))


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class EstimatorResult:
    estimate: float
    stderr: float
    replicas: int
    seed: int | None = None
    streams: tuple = ()
    params: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def record(self, name: str) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "samples"}
        d["streams"] = list(self.streams)
        d["name"] = name
        return d

    @property
    def rel_err(self) -> float:
        return abs(self.stderr / self.estimate) if self.estimate else np.inf

    def z_score(self, target: float) -> float:
        return (self.estimate - target) / self.stderr if self.stderr > 0 else np.inf


def mean_result(x, seed=None, streams=(), params=None, keep=False) -> EstimatorResult:
    x = np.asarray(x, dtype=float)
    n = x.size
    se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else np.inf
    return EstimatorResult(float(np.mean(x)), se, n, seed, tuple(streams), params or {},
                           x if keep else None)


def ratio_of_means(num, den):
    """Delta-method estimate and SE of E[num]/E[den] from paired samples."""
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    n = num.size
    mn, md = num.mean(), den.mean()
    r = mn / md
    resid = (num - r * den) / md
    return r, float(resid.std(ddof=1) / np.sqrt(n))


def log_ratio_of_means(num, den):
    """Delta-method ln(E num / E den) with SE, for paired samples."""
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    n = num.size
    mn, md = num.mean(), den.mean()
    infl = num / mn - den / md
    return float(np.log(mn / md)), float(infl.std(ddof=1) / np.sqrt(n))


def kish_ess(w) -> float:
    w = np.asarray(w, float)
    return float(w.sum() ** 2 / np.sum(w * w))
