"""Columnar binary dataset files and their CSV twins.

Layout (little-endian throughout):

    magic     8 bytes  b"FPNDATA1"
    version   u32      1
    n_cols    u32
    n_rows    u64
    per column: name_len u16, ascii name
    per column: n_rows float64 values, contiguous

Column order is fixed: x, y, t, u_inlet, d_y, u, v, p. Coordinates are
region-of-interest local (x in [0, 1.5], y in [0, 0.3]).
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FPNDATA1"
VERSION = 1
COLUMNS = ("x", "y", "t", "u_inlet", "d_y", "u", "v", "p")


class DataIntegrityError(Exception):
    """A field value is NaN or the file fails a structural check."""


def write_columnar(path, columns: dict[str, np.ndarray]) -> None:
    """Write the columns to a binary file, in canonical column order."""
    names = list(COLUMNS)
    if set(columns) != set(names):
        raise ValueError(f"expected columns {names}, got {sorted(columns)}")
    n_rows = len(columns[names[0]])
    for name in names:
        col = columns[name]
        if len(col) != n_rows:
            raise ValueError("ragged columns")
        if not np.all(np.isfinite(col)):
            raise DataIntegrityError(f"non-finite value in column {name!r}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, len(names), n_rows))
        for name in names:
            raw = name.encode("ascii")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for name in names:
            fh.write(np.ascontiguousarray(columns[name], dtype="<f8").tobytes())


def read_columnar(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise DataIntegrityError(f"{path}: bad magic, not a dataset file")
        version, n_cols, n_rows = struct.unpack("<IIQ", fh.read(16))
        if version != VERSION:
            raise DataIntegrityError(f"{path}: unsupported version {version}")
        names = []
        for _ in range(n_cols):
            (ln,) = struct.unpack("<H", fh.read(2))
            names.append(fh.read(ln).decode("ascii"))
        out = {}
        for name in names:
            data = fh.read(8 * n_rows)
            if len(data) != 8 * n_rows:
                raise DataIntegrityError(f"{path}: truncated column {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8").copy()
    return out


def write_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Plain-text export with the same column order as the binary format."""
    names = list(COLUMNS)
    n_rows = len(columns[names[0]])
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n_rows):
            fh.write(",".join(repr(float(columns[name][i])) for name in names) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=np.float64)
    return {name: data[:, i].copy() for i, name in enumerate(header)}
