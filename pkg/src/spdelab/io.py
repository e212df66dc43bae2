"""Result persistence: CSV curves, JSON reports, binary snapshots and the run manifest.

Every numeric output is a pure function of the materialised config, so two
runs with the same config hash write byte-identical CSV and JSON files.
Wall-clock timestamps go to ``run.log`` only.
"""

from __future__ import annotations

import hashlib
import json
import struct
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__

SNAPSHOT_MAGIC = b"SPDS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIdd")


class OutputError(OSError):
    pass


def format_number(x: float) -> str:
    """Shortest-safe round-trip text: 17 significant digits."""
    return format(float(x), ".17g")


def write_csv(path, columns: dict) -> Path:
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    rows = [",".join(names)]
    for i in range(len(data[0]) if data else 0):
        rows.append(",".join(format_number(col[i]) for col in data))
    path.write_text("\n".join(rows) + "\n")
    return path


def read_csv(path) -> dict:
    lines = Path(path).read_text().splitlines()
    names = lines[0].split(",")
    values = np.array([[float(v) for v in line.split(",")] for line in lines[1:]]).reshape(-1, len(names))
    return {n: values[:, i] for i, n in enumerate(names)}


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def write_snapshots(path, snapshots: np.ndarray, times: np.ndarray, dt: float,
                    record_every: int, length: float) -> Path:
    """Binary layout (little-endian)::

        magic "SPDS" | u32 version | u32 paths | u32 records | u32 nodes
        | u32 record_every | f64 dt | f64 length | f64 times[records]
        | f64 values[paths, records, nodes]
    """
    snaps = np.ascontiguousarray(snapshots, dtype="<f8")
    if snaps.ndim != 3:
        raise OutputError("snapshots must have shape (paths, records, nodes)")
    B, R, n = snaps.shape
    times = np.ascontiguousarray(times, dtype="<f8")
    if times.shape != (R,):
        raise OutputError("times must have one entry per record")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, B, R, n, record_every, dt, length))
        fh.write(times.tobytes())
        fh.write(snaps.tobytes())
    return path


def read_snapshots(path) -> dict:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise OutputError("snapshot file is truncated")
    magic, version, B, R, n, rec, dt, length = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise OutputError("not a snapshot file (bad magic)")
    if version != SNAPSHOT_VERSION:
        raise OutputError(f"unsupported snapshot version {version}")
    off = _HEADER.size
    need = off + 8 * (R + B * R * n)
    if len(raw) != need:
        raise OutputError(f"snapshot file has {len(raw)} bytes, expected {need}")
    times = np.frombuffer(raw, "<f8", R, off)
    values = np.frombuffer(raw, "<f8", B * R * n, off + 8 * R).reshape(B, R, n)
    return {"times": times.copy(), "snapshots": values.copy(), "dt": dt, "record_every": rec,
            "length": length}


def module_versions() -> dict:
    out = {"spdelab": __version__}
    for name in ("numpy", "scipy", "numba", "matplotlib"):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(report, cfg, out_dir, *, figures: bool = True, extra_log: str = "") -> dict:
    """Write config, report, curves, sample snapshots and figures, then the manifest.

    Returns the manifest dictionary.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}") from None
    started = datetime.now(timezone.utc).isoformat()
    files = [out / "config.ini"]
    files[0].write_text(cfg.text())
    files.append(write_json(out / "report.json", report.to_dict()))
    for curve in report.curves:
        files.append(write_csv(out / f"{curve.name}.csv", curve.columns))
    for name, item in report.snapshots.items():
        files.append(write_snapshots(out / f"{name}.snap", **item))
    figs = []
    if figures:
        from .plotting import plot_curve
        for curve in report.curves:
            figs.append(plot_curve(curve, out / f"{curve.name}.png"))
    manifest = {"config_hash": cfg.hash, "seed": cfg["noise"]["seed"],
                "module_versions": module_versions(),
                "outputs": {p.name: _sha256(p) for p in files},
                "figures": sorted(p.name for p in figs),
                "passed": report.passed}
    write_json(out / "manifest.json", manifest)
    finished = datetime.now(timezone.utc).isoformat()
    log = [f"started {started}", f"finished {finished}", f"config_hash {cfg.hash}"]
    log += report.lines()
    if extra_log:
        log.append(extra_log)
    (out / "run.log").write_text("\n".join(log) + "\n")
    return manifest
