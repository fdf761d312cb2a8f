"""Tensor and decomposition files.

Binary tensor layout (little-endian)::

    b"ODCT" | version: u32 | p: u32 | dims: p x u64 | entries: prod(dims) x f64

Entries are stored first-mode-fastest (Fortran order). The JSON debug
format is ``{"dims": [...], "data": nested lists indexed t[i1][i2]...}``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor_core import as_tensor

MAGIC = b"ODCT"
VERSION = 1


def write_tensor(path, t: np.ndarray) -> None:
    t = as_tensor(t)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, t.ndim))
        fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
        fh.write(np.asarray(t, dtype="<f8").tobytes(order="F"))


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an ODCT tensor file")
    version, p = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 12
    dims = struct.unpack_from(f"<{p}Q", raw, offset)
    offset += 8 * p
    n = int(np.prod(dims))
    if len(raw) - offset != 8 * n:
        raise ValueError(f"{path}: expected {n} entries, found {(len(raw) - offset) // 8}")
    data = np.frombuffer(raw, dtype="<f8", count=n, offset=offset)
    return as_tensor(data.astype(float), dims)


def tensor_to_json(t: np.ndarray) -> dict:
    return {"dims": list(t.shape), "data": np.asarray(t).tolist()}


def tensor_from_json(d: dict) -> np.ndarray:
    t = as_tensor(d["data"])
    if list(t.shape) != list(d["dims"]):
        raise ValueError(f"nested data shape {t.shape} disagrees with dims {d['dims']}")
    return t


def load_tensor(path) -> np.ndarray:
    """Read either format, chosen by file extension (``.json`` or binary)."""
    if str(path).endswith(".json"):
        return tensor_from_json(json.loads(Path(path).read_text()))
    return read_tensor(path)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
