"""Command-line interface.

Configuration precedence: command-line flags, then the [<command>] section of
the INI file given by --config, then its [run] section, then built-in
defaults.  Every run writes records.jsonl, tables and manifest.json into a
fresh directory under --out.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .correlator import (InsertionSet, SeibergError, partition_from_z0, partition_raw_cross_check,
                         seiberg_check, unit_volume_condition, z0_samples, mobius_covariance_check)
from .estimators import default_seed, SEED_ENV
from .geometry import MobiusMap, identity_suite
from . import io

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_SEIBERG = 3
EXIT_CODES = {"ok": EXIT_OK, "check-failed": EXIT_FAIL, "config-error": EXIT_CONFIG,
              "seiberg-fail": EXIT_SEIBERG}

PRESETS = {
    "pure-gravity": {"gamma": float(np.sqrt(8 / 3)), "alpha": float(np.sqrt(8 / 3)), "target_shape": 0.5},
    "ising": {"gamma": float(np.sqrt(3.0)), "alpha": float(np.sqrt(3.0)), "target_shape": 2 / 3},
}
PRESET_POINTS = (0.0, 1.0, -1.0)

DEFAULTS = {"gamma": 1.0, "mu": 1.0, "lmax": 64, "replicas": 2000, "out": "runs", "workers": 1}


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(message)
        self.field = field


# ----------------------------------------------------------------------------
# configuration

NUMERIC = {"gamma": float, "mu": float, "mu1": float, "mu2": float, "lmax": int, "replicas": int,
           "seed": int, "samples": int, "workers": int, "n": int, "target_shape": float,
           "mc_replicas": int, "level": int}


def load_config(path, command: str) -> dict:
    if not path:
        return {}
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError("config", f"cannot read config file {path}")
    out = {}
    for sec in ("run", command):
        if cp.has_section(sec):
            for k, v in cp.items(sec):
                out[k.replace("-", "_")] = v
    return out


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(load_config(args.config, args.command))
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "func")})
    preset = cfg.get("preset")
    if preset:
        if preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        p = PRESETS[preset]
        cfg.setdefault("target_shape", p["target_shape"])
        if "insertions" not in vars(args) or args.insertions is None:
            cfg["insertions"] = ";".join(f"{x},0,{p['alpha']!r}" for x in PRESET_POINTS)
        if args.gamma is None:
            cfg["gamma"] = p["gamma"]
    for k, typ in NUMERIC.items():
        if k in cfg and cfg[k] is not None:
            try:
                cfg[k] = typ(cfg[k])
            except (TypeError, ValueError):
                raise ConfigError(k, f"{k} must be {typ.__name__}, got {cfg[k]!r}")
    cfg.setdefault("seed", default_seed())
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    g = cfg.get("gamma")
    if g is not None and not 0 < g < 2:
        raise ConfigError("gamma", "gamma must lie in (0, 2)")
    for k in ("mu", "mu1", "mu2"):
        if k in cfg and cfg[k] is not None and cfg[k] <= 0:
            raise ConfigError(k, f"{k} must be positive")
    if cfg.get("lmax", 1) < 1:
        raise ConfigError("lmax", "lmax must be >= 1")
    if cfg.get("replicas", 2) < 2:
        raise ConfigError("replicas", "replicas must be >= 2")
    if cfg.get("workers", 1) < 1:
        raise ConfigError("workers", "workers must be >= 1")


def insertion_set(cfg: dict) -> InsertionSet:
    text = cfg.get("insertions")
    if not text:
        raise ConfigError("insertions", "insertions are required ('re,im,alpha;...')")
    try:
        return InsertionSet.parse(text, cfg["gamma"], cfg.get("mu", 1.0))
    except ValueError as exc:
        raise ConfigError("insertions", str(exc))


def parse_floats(text, field) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(field, f"cannot parse {field}: {text!r}")


# ----------------------------------------------------------------------------
# replica-parallel Z0

def _z0_chunk(job):
    texts, gamma, mu, L, n, seed, stream, start = job
    isets = [InsertionSet.parse(t, gamma, mu) for t in texts]
    return z0_samples(isets, L, n, seed, stream, start=start)


def parallel_z0(isets, L, replicas, seed, stream=0, workers=1, chunk=500):
    """Z0 replicas split in fixed ranges; the result is independent of workers."""
    texts = [";".join(f"{i.z.real!r},{i.z.imag!r},{i.alpha!r}" for i in s.insertions) for s in isets]
    jobs = [(texts, isets[0].gamma, isets[0].mu, L, min(chunk, replicas - s), seed, stream, s)
            for s in range(0, replicas, chunk)]
    if workers == 1:
        parts = [_z0_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_z0_chunk, jobs))
    return np.vstack(parts)


# ----------------------------------------------------------------------------
# commands; each returns (results, verdict, tables)

def cmd_geometry_check(cfg):
    res = identity_suite(B=cfg["lmax"] if cfg.get("lmax_set") else 128)
    ok = all(r["passed"] for r in res.values())
    rows = [(k, r["kind"], r["residual"], r["tol"], r["passed"]) for k, r in res.items()]
    return res, ("ok" if ok else "check-failed"), {"residuals": (("identity", "kind", "residual", "tol", "passed"), rows)}


def cmd_sample_field(cfg):
    from .gff import sample_spectral, truncated_covariance
    L, n, seed = cfg["lmax"], cfg.get("samples", 1000), cfg["seed"]
    smp = sample_spectral(L, seed, 0, range(n))
    probes = np.array([0.0, 0.5 + 0.5j, -1.2, 2.0j, 0.3 - 0.8j])
    vals = smp.at(probes)
    rows = []
    for i in range(len(probes)):
        for j in range(i, len(probes)):
            emp = float(np.mean(vals[:, i] * vals[:, j]))
            se = float(np.std(vals[:, i] * vals[:, j], ddof=1) / np.sqrt(n))
            th = float(truncated_covariance(L, probes[i], probes[j])[0])
            rows.append((str(probes[i]), str(probes[j]), emp, se, th, abs(emp - th) / se))
    ok = all(r[5] < 4 for r in rows)
    return ({"samples": n, "L": L, "max_z": max(r[5] for r in rows), "dump": "fields.bin"},
            "ok" if ok else "check-failed",
            {"covariance": (("x", "y", "empirical", "se", "truncated_series", "z"), rows),
             "_bytes": {"fields.bin": smp.to_bytes()}})


def cmd_chaos_moments(cfg):
    from .gmc import ChaosParams, ball_masses, fit_moment_slope, xi
    g, L = cfg["gamma"], cfg["lmax"]
    qs = parse_floats(cfg.get("q_list", "0.5,1,2"), "q_list")
    radii = parse_floats(cfg.get("radii", "0.25,0.125,0.0625,0.03125"), "radii")
    masses = ball_masses(ChaosParams(g, L), radii, cfg["replicas"], cfg["seed"])
    rows = []
    for q in qs:
        if not 0 < q < 4 / g ** 2:
            raise ConfigError("q_list", f"q = {q} outside (0, 4/gamma^2)")
        f = fit_moment_slope(masses, radii, q)
        rows.append((q, f.slope, f.stderr, float(xi(g, q))))
    return ({"fits": rows}, "ok", {"xi_fit": (("q", "slope", "se", "xi"), rows)})


def _seiberg_or_raise(iset):
    rep = seiberg_check(iset)
    if not rep.passed:
        raise SeibergError(rep.as_dict())


def cmd_correlator(cfg):
    iset = insertion_set(cfg)
    _seiberg_or_raise(iset)
    z0 = parallel_z0([iset], cfg["lmax"], cfg["replicas"], cfg["seed"], 0, cfg["workers"])[:, 0]
    est = partition_from_z0(iset, z0, "continuum", cfg["lmax"], cfg["seed"], (0,))
    return est.record("partition"), "ok", {}


def cmd_kpz_check(cfg):
    iset = insertion_set(cfg)
    _seiberg_or_raise(iset)
    mu1, mu2 = cfg.get("mu1", 1.0), cfg.get("mu2", 2.0)
    z0 = parallel_z0([iset], cfg["lmax"], cfg["replicas"], cfg["seed"], 0, cfg["workers"])[:, 0]
    p1 = partition_from_z0(iset.with_mu(mu1), z0)
    p2 = partition_from_z0(iset.with_mu(mu2), z0)
    target = (mu2 / mu1) ** (-iset.s / iset.gamma)
    ratio = p2.estimate / p1.estimate
    raw = partition_raw_cross_check(iset.with_mu(mu1), z0)
    ok = abs(ratio / target - 1) < 1e-10 and raw["rel_discrepancy"] < 0.01
    return ({"ratio": ratio, "target": target, "raw_check": raw, "partition_mu1": p1.record("mu1"),
             "partition_mu2": p2.record("mu2")}, "ok" if ok else "check-failed", {})


def cmd_mobius_check(cfg):
    iset = insertion_set(cfg)
    _seiberg_or_raise(iset)
    try:
        a, b, c, d = (complex(v) for v in str(cfg.get("map", "1,-1,1,1")).split(","))
        psi = MobiusMap(a, b, c, d)
    except ValueError as exc:
        raise ConfigError("map", str(exc))
    mapped = iset.mapped(psi)
    z = parallel_z0([iset, mapped], cfg["lmax"], cfg["replicas"], cfg["seed"], 0, cfg["workers"])
    r = mobius_covariance_check(iset, psi, cfg["replicas"], cfg["lmax"], cfg["seed"],
                                z0_pair=(z[:, 0], z[:, 1]))
    ok = abs(r.estimate - 1) < 3 * r.stderr
    return r.record("mobius_ratio"), "ok" if ok else "check-failed", {}


def cmd_volume_law(cfg):
    from .liouville_measure import sample_liouville_observable, volume_law_test
    iset = insertion_set(cfg)
    _seiberg_or_raise(iset)
    shape = cfg.get("target_shape", iset.s / iset.gamma)
    draws = sample_liouville_observable(iset, None, cfg["replicas"], cfg["lmax"], cfg["seed"],
                                        method=cfg.get("method", "cfield"))
    res = volume_law_test(draws, shape, iset.mu)
    return res, "ok" if res["passed"] else "check-failed", {
        "draws": (("replica", "Y", "weight"), np.column_stack([np.arange(draws.Y.size), draws.Y, draws.weights]))}


def cmd_unit_volume(cfg):
    from .gmc import Disk
    from .liouville_measure import unit_volume_shape, weighted_shape_means
    iset = insertion_set(cfg)
    cond = unit_volume_condition(iset)
    if not cond["passed"]:
        raise ConfigError("insertions", f"unit-volume condition fails: {cond}")
    regions = [Disk(complex(z), 0.5) for z in iset.z]
    shapes, w = unit_volume_shape(iset, regions, cfg["replicas"], cfg["lmax"], cfg["seed"])
    m, se = weighted_shape_means(shapes, w)
    rows = [(str(complex(z)), float(a), float(b)) for z, a, b in zip(iset.z, m, se)]
    return {"means": m, "se": se, "condition": cond}, "ok", {"shapes": (("disk_center", "mean", "se"), rows)}


def cmd_weyl_check(cfg):
    from .anomaly import weyl_anomaly_check, constant_shift_log_ratio
    from .geometry import ConformalMetric
    from .harmonics import SphereGrid
    iset = insertion_set(cfg)
    _seiberg_or_raise(iset)
    spec = str(cfg.get("phi_spec", "2,1,0.3")).split(",")
    grid = SphereGrid(2 * cfg["lmax"])
    try:
        if spec[0] == "const":
            g = ConformalMetric.constant(grid, float(spec[1]))
        else:
            g = ConformalMetric.from_harmonic(grid, int(spec[0]), int(spec[1]), float(spec[2]))
    except (IndexError, ValueError):
        raise ConfigError("phi_spec", "phi-spec is 'l,m,amplitude' or 'const,k'")
    rep = weyl_anomaly_check(iset, g, cfg["replicas"], cfg["lmax"], cfg["seed"])
    out = rep.as_dict()
    if spec[0] == "const":
        out["constant_oracle"] = constant_shift_log_ratio(iset, float(spec[1]))
    ok = abs(rep.z_score) < 3
    return out, "ok" if ok else "check-failed", {}


def cmd_coulomb_moment(cfg):
    from .anomaly import coulomb_moment, coulomb_mc, DomainError
    al = parse_floats(cfg.get("alphas", "0.5,0.5,0.5"), "alphas")
    if len(al) != 3:
        raise ConfigError("alphas", "three alphas are required")
    try:
        q = coulomb_moment(cfg.get("n", 1), cfg["gamma"], al)
    except DomainError as exc:
        raise ConfigError("n", str(exc))
    out = {"quadrature": q}
    verdict = "ok"
    if cfg.get("mc_replicas"):
        mc = coulomb_mc(cfg.get("n", 1), cfg["gamma"], al, cfg["mc_replicas"], cfg["lmax"], cfg["seed"])
        out["mc"] = mc.record("coulomb_mc")
        out["rel_diff"] = abs(mc.estimate / q["value"] - 1)
    rows = [(lev, nph, val) for lev, nph, val in q["trace"]]
    return out, verdict, {"refinement": (("level", "nphi", "integral"), rows)}


COMMANDS = {
    "geometry-check": cmd_geometry_check,
    "sample-field": cmd_sample_field,
    "chaos-moments": cmd_chaos_moments,
    "correlator": cmd_correlator,
    "kpz-check": cmd_kpz_check,
    "mobius-check": cmd_mobius_check,
    "volume-law": cmd_volume_law,
    "unit-volume": cmd_unit_volume,
    "weyl-check": cmd_weyl_check,
    "coulomb-moment": cmd_coulomb_moment,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liouville", description="Liouville quantum gravity on the sphere")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, insertions=False):
        sp.add_argument("--config", help="INI file with [run] and per-command sections")
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--mu", type=float)
        sp.add_argument("--lmax", type=int, help="band limit L of the field")
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--seed", type=int, help=f"default from ${SEED_ENV}")
        sp.add_argument("--out", help="output root (a fresh run directory is created inside)")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--preset", choices=sorted(PRESETS))
        if insertions:
            sp.add_argument("--insertions", help="'re,im,alpha;re,im,alpha;...'")

    common(sub.add_parser("geometry-check"))
    sp = sub.add_parser("sample-field"); common(sp); sp.add_argument("--samples", type=int)
    sp = sub.add_parser("chaos-moments"); common(sp)
    sp.add_argument("--q-list", dest="q_list"); sp.add_argument("--radii")
    common(sub.add_parser("correlator"), True)
    sp = sub.add_parser("kpz-check"); common(sp, True)
    sp.add_argument("--mu1", type=float); sp.add_argument("--mu2", type=float)
    sp = sub.add_parser("mobius-check"); common(sp, True); sp.add_argument("--map")
    sp = sub.add_parser("volume-law"); common(sp, True)
    sp.add_argument("--target-shape", dest="target_shape", type=float)
    sp.add_argument("--method", choices=["cfield", "factorized"])
    common(sub.add_parser("unit-volume"), True)
    sp = sub.add_parser("weyl-check"); common(sp, True)
    sp.add_argument("--phi-spec", dest="phi_spec", help="'l,m,amplitude' or 'const,k'")
    sp = sub.add_parser("coulomb-moment"); common(sp)
    sp.add_argument("--n", type=int); sp.add_argument("--alphas")
    sp.add_argument("--mc-replicas", dest="mc_replicas", type=int)
    return p


def _emit(obj, stream=sys.stdout):
    stream.write(io.canonical(obj) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = resolve(args)
        cfg["lmax_set"] = args.lmax is not None
        results, verdict, tables = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        _emit({"error": "config-error", "field": exc.field, "message": str(exc)}, sys.stderr)
        return EXIT_CONFIG
    except SeibergError as exc:
        rep = getattr(exc, "report", {})
        _emit({"error": "seiberg-fail", "report": rep}, sys.stderr)
        return EXIT_SEIBERG
    hashed = {k: v for k, v in cfg.items() if k not in ("out", "workers", "lmax_set")}
    rec = io.make_record(args.command, hashed, results, verdict, time.time() - started)
    run = io.new_run_dir(cfg["out"], args.command, rec["config_hash"])
    files = ["records.jsonl"]
    io.write_records(run / "records.jsonl", [rec])
    for name, blob in tables.pop("_bytes", {}).items():
        (run / name).write_bytes(blob)
        files.append(name)
    for name, (header, rows) in tables.items():
        io.write_table(run / f"{name}.csv", header, rows)
        files.append(f"{name}.csv")
    io.write_manifest(run, args.command, hashed, files, started)
    _emit({"run_dir": str(run), **rec})
    return EXIT_CODES[verdict]


if __name__ == "__main__":
    sys.exit(main())
