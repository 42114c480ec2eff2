"""On-disk layout of a run directory.

``manifest.json``      parameters, configuration, status, artifact paths
``branch.jsonl``       one branch record per line
``orbit_<key>.coeffs`` JSON with the flat state vector of one record
``branch_point.json``  located branch point, when there is one

Floats are written with ``repr`` precision, so everything round-trips exactly.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from .continuation import BranchArchive, BranchPoint, BranchRecord, ContinuationConfig
from .model import ModelParams

MANIFEST = "manifest.json"
RECORDS = "branch.jsonl"
BRANCH_POINT = "branch_point.json"
FORMAT_VERSION = 1


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def orbit_name(key: str) -> str:
    return f"orbit_{key}.coeffs"


def write_orbit(path: Path, X: np.ndarray, params: ModelParams, key: str) -> None:
    blob = {"n": params.n, "m": params.m, "k": params.k, "step": key,
            "omega": float(X[-1]), "X": [float(x) for x in X]}
    path.write_text(json.dumps(blob))


def read_orbit(path: Path) -> tuple[np.ndarray, dict]:
    blob = json.loads(Path(path).read_text())
    return np.array(blob["X"], dtype=float), blob


def _bp_to_dict(bp: BranchPoint) -> dict:
    out = {}
    for f in fields(bp):
        v = getattr(bp, f.name)
        out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
    return out


def _bp_from_dict(d: dict) -> BranchPoint:
    kw = {}
    for f in fields(BranchPoint):
        v = d[f.name]
        kw[f.name] = np.array(v, dtype=float) if isinstance(v, list) else v
    return BranchPoint(**kw)


def write_archive(archive: BranchArchive, out: Path, status: str = "complete",
                  wall_clock: float | None = None, extra: dict | None = None) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    p = archive.params
    with open(out / RECORDS, "w") as fh:
        for rec in archive.records:
            fh.write(json.dumps(rec.to_dict()) + "\n")
    for key, X in archive.states.items():
        write_orbit(out / orbit_name(key), X, p, key)
    if archive.branch_point is not None:
        (out / BRANCH_POINT).write_text(json.dumps(_bp_to_dict(archive.branch_point)))
    manifest = {
        "format": FORMAT_VERSION,
        "n": p.n, "k": p.k, "m": p.m,
        "config": asdict(archive.config),
        "status": status,
        "eight": archive.eight_key,
        "switches": archive.switches,
        "folds": archive.folds,
        "events": archive.events,
        "artifacts": {
            "records": RECORDS,
            "orbits": sorted(orbit_name(k) for k in archive.states),
            "branch_point": BRANCH_POINT if archive.branch_point is not None else None,
        },
        "version": tool_version(),
        "written": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "wall_clock": wall_clock,
    }
    if extra:
        manifest.update(extra)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2))
    return out / MANIFEST


def read_manifest(path: Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    return json.loads(path.read_text())


def read_archive(directory: Path) -> BranchArchive:
    directory = Path(directory)
    if directory.is_file():
        directory = directory.parent
    man = read_manifest(directory)
    params = ModelParams(n=man["n"], m=man["m"], k=man["k"])
    archive = BranchArchive(params, ContinuationConfig(**man["config"]))
    rec_file = directory / RECORDS
    if rec_file.exists():
        for line in rec_file.read_text().splitlines():
            if line.strip():
                archive.records.append(BranchRecord.from_dict(json.loads(line)))
    for rec in archive.records:
        f = directory / orbit_name(rec.state_ref)
        if f.exists():
            archive.states[rec.state_ref] = read_orbit(f)[0]
    bp_file = directory / BRANCH_POINT
    if bp_file.exists():
        archive.branch_point = _bp_from_dict(json.loads(bp_file.read_text()))
    archive.eight_key = man.get("eight")
    archive.switches = man.get("switches", 0)
    archive.folds = man.get("folds", 0)
    archive.events = list(man.get("events", []))
    return archive
