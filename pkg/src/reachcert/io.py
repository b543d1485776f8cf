"""Artifact serialization: value-field container, CSV exports, JSON documents.

Value-field container layout (all integers little-endian)::

    4 bytes   magic b"RCVF"
    uint32    format version
    uint32    header length L in bytes
    L bytes   UTF-8 JSON header, sorted keys (grid lo/hi/counts, gamma, stats)
    payload   float64 little-endian values, row-major over the grid axes

All writes go to a temporary file in the target directory and are moved into
place with ``os.replace`` so readers never observe a partial artifact.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .exceptions import ConfigError, ReachCertError
from .value import Grid, ValueField

FIELD_MAGIC = b"RCVF"
FIELD_VERSION = 1


def _clean(obj: Any) -> Any:
    """Recursively convert numpy values to JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(doc: Any) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | os.PathLike, doc: Any) -> Path:
    return atomic_write_text(path, dumps(doc))


def load_json(path: str | os.PathLike) -> Any:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# Value fields
# ---------------------------------------------------------------------------


def field_header(fld: ValueField) -> dict:
    return {
        "lo": fld.grid.lo.tolist(),
        "hi": fld.grid.hi.tolist(),
        "counts": list(fld.grid.shape),
        "gamma": fld.gamma,
        "iterations": fld.iterations,
        "residual": fld.residual,
        "converged": fld.converged,
        "settled": fld.settled,
        "mode": fld.mode,
        "bound": fld.bound,
    }


def field_to_bytes(fld: ValueField) -> bytes:
    header = json.dumps(_clean(field_header(fld)), sort_keys=True, allow_nan=False).encode("utf-8")
    payload = np.ascontiguousarray(fld.values, dtype="<f8").tobytes(order="C")
    return FIELD_MAGIC + struct.pack("<II", FIELD_VERSION, len(header)) + header + payload


def field_from_bytes(data: bytes) -> ValueField:
    if len(data) < 12 or data[:4] != FIELD_MAGIC:
        raise ReachCertError("not a value-field container")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != FIELD_VERSION:
        raise ReachCertError(f"unsupported value-field version {version}")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    grid = Grid(np.array(header["lo"], float), np.array(header["hi"], float),
                tuple(int(c) for c in header["counts"]))
    payload = data[12 + hlen:]
    if len(payload) != 8 * grid.size:
        raise ReachCertError("value-field payload size does not match the grid")
    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape(grid.shape)
    residual = header["residual"]
    return ValueField(grid, values, float(header["gamma"]), int(header["iterations"]),
                      float("nan") if residual is None else float(residual),
                      bool(header["converged"]), bool(header["settled"]), header["mode"],
                      float(header["bound"]))


def save_field(path: str | os.PathLike, fld: ValueField) -> Path:
    return atomic_write_bytes(path, field_to_bytes(fld))


def load_field(path: str | os.PathLike) -> ValueField:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise ConfigError(f"value field not found: {path}") from exc
    return field_from_bytes(data)


def export_field_csv(path: str | os.PathLike, fld: ValueField) -> Path:
    nodes = fld.grid.nodes()
    header = [f"x{i}" for i in range(fld.grid.ndim)] + ["value"]
    return write_csv(path, header, (list(x) + [v] for x, v in zip(nodes, fld.flat)))


def export_policy_csv(path: str | os.PathLike, policy, grid: Grid) -> Path:
    """Tabulate a policy on the nodes of ``grid``."""
    nodes = grid.nodes()
    U = np.atleast_2d(policy.batch(nodes))
    header = [f"x{i}" for i in range(grid.ndim)] + [f"u{j}" for j in range(U.shape[1])]
    return write_csv(path, header, (list(x) + list(u) for x, u in zip(nodes, U)))


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


def export_certified_csv(path: str | os.PathLike, cset) -> Path:
    """One row per lattice center: coordinates, certificate values and flags."""
    n = cset.centers.shape[1]
    methods = sorted(cset.reports[0].bounds) if cset.reports else []
    header = ([f"x{i}" for i in range(n)] + [f"cert_{m}" for m in methods]
              + [f"certified_{m}" for m in methods])
    rows = []
    for x, rep in zip(cset.centers, cset.reports):
        certs = [rep.certificate(m) for m in methods]
        flags = [int(rep.certified[m]) for m in methods]
        rows.append(list(x) + certs + flags)
    return write_csv(path, header, rows)
