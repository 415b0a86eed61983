"""Result persistence: JSON-lines records, CSV tables, run manifests.

Run directories are created fresh under the output root and never reused, so
one command cannot overwrite another's outputs.  The hashed payload of a
record excludes wall-clock fields.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np

from . import __version__

VOLATILE = ("wall_clock", "timestamp", "started", "finished")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else repr(v)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def canonical(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical(config).encode()).hexdigest()[:16]


def make_record(command: str, config: dict, results: dict, verdict=None,
                wall_clock: float | None = None) -> dict:
    return {"command": command, "config_hash": config_hash(config), "config": _jsonable(config),
            "results": _jsonable(results), "verdict": verdict, "version": __version__,
            "wall_clock": wall_clock}


def stable_payload(record: dict) -> str:
    """Record serialization without volatile fields (for reproducibility checks)."""
    return canonical({k: v for k, v in record.items() if k not in VOLATILE})


def new_run_dir(root, command: str, chash: str) -> Path:
    """Fresh directory <root>/<command>-<hash>-<n>; never reuses an existing one."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    n = 0
    while True:
        d = root / f"{command}-{chash}-{n:03d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            n += 1


def write_records(path, records) -> None:
    with open(path, "x") as f:
        for r in records:
            f.write(canonical(r) + "\n")


def read_records(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_table(path, header, rows) -> None:
    with open(path, "x", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([_jsonable(v) for v in r])


def write_manifest(run_dir: Path, command: str, config: dict, files, started: float) -> None:
    man = {"command": command, "config_hash": config_hash(config), "config": _jsonable(config),
           "files": sorted(files), "version": __version__, "started": started,
           "finished": time.time(), "pid": os.getpid()}
    with open(Path(run_dir) / "manifest.json", "x") as f:
        json.dump(man, f, indent=1, sort_keys=True)
