"""Deterministic output artifacts: CSV time series and binary snapshots.

Snapshot layout (all little endian)::

    b"FSCN"  u32 version
    u32 d_h  u32 N_y  u32 N_z
    f64 L  f64 Z_max  f64 stretch  f64 t  f64 A
    u32 n_fields
    per field: u16 name_len, name (ascii), u32 ndim, u32 dims[ndim], f64 data[...]

Fields are written in the order ``rho``, ``v``, ``h``.
"""
from __future__ import annotations

import struct

import numpy as np

from ..dynamics.physics import FlowState
from ..errors import ContractError
from ..geometry import build_grid

__all__ = ["write_csv", "read_csv", "CsvWriter", "write_snapshot", "read_snapshot",
           "SNAPSHOT_MAGIC", "SNAPSHOT_VERSION"]

SNAPSHOT_MAGIC = b"FSCN"
SNAPSHOT_VERSION = 1
_HEAD = struct.Struct("<4sIIII5d")


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


class CsvWriter:
    """Streaming CSV with a fixed column order and 17-digit floats."""

    def __init__(self, path, columns):
        self.columns = list(columns)
        self.path = path
        self._fh = open(path, "w", encoding="ascii", newline="\n")
        self._fh.write(",".join(self.columns) + "\n")

    def write(self, row):
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise ContractError(f"row lacks columns {missing}")
        self._fh.write(",".join(_fmt(row[c]) for c in self.columns) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, columns, rows):
    with CsvWriter(path, columns) as w:
        for r in rows:
            w.write(r)


def read_csv(path):
    """Return ``(columns, array)`` from a file written by :class:`CsvWriter`."""
    with open(path, encoding="ascii") as fh:
        cols = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return cols, data


def write_snapshot(path, state):
    """Write ``state`` in the self-describing binary format."""
    g = state.grid
    out = [_HEAD.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.d_h, g.N_y, g.N_z,
                      g.L, g.Z_max, g.stretch, float(state.t), float(state.A))]
    flds = [("rho", state.rho), ("v", state.v), ("h", state.h)]
    out.append(struct.pack("<I", len(flds)))
    for name, arr in flds:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("ascii")
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def read_snapshot(path):
    """Read a snapshot back into a :class:`FlowState`.

    Raises
    ------
    ContractError
        On a wrong magic, unknown version or truncated file.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEAD.size or buf[:4] != SNAPSHOT_MAGIC:
        raise ContractError(f"{path}: not a snapshot file")
    magic, ver, d_h, N_y, N_z, L, Z_max, stretch, t, A = _HEAD.unpack_from(buf, 0)
    if ver != SNAPSHOT_VERSION:
        raise ContractError(f"{path}: unsupported snapshot version {ver}")
    pos = _HEAD.size
    try:
        (nf,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        data = {}
        for _ in range(nf):
            (ln,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + ln].decode("ascii")
            pos += ln
            (nd,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{nd}I", buf, pos)
            pos += 4 * nd
            count = int(np.prod(shape)) if nd else 1
            if pos + 8 * count > len(buf):
                raise ContractError(f"{path}: truncated field {name!r}")
            data[name] = np.frombuffer(buf, "<f8", count, pos).reshape(shape).astype(float)
            pos += 8 * count
    except struct.error:
        raise ContractError(f"{path}: truncated snapshot") from None
    grid = build_grid(N_y=N_y, N_z=N_z, Z_max=Z_max, stretch=stretch, L=L, d_h=d_h)
    return FlowState(data["rho"], data["v"], data["h"], t, grid, A)
