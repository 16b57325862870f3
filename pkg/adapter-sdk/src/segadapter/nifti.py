"""Just enough NIfTI-1 to read image geometry and write label masks.

Single-file n+1, little-endian, gzip by magic bytes. Adapters only need
the grid and spacing of the incoming image and a way to emit uint8 masks
on that grid.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

_HEADER = 348
_MAGIC = b"n+1\x00"
_DTYPES = {2: "<u1", 4: "<i2", 8: "<i4", 16: "<f4", 64: "<f8"}


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as gz:
                return gz.read()
        return f.read()


def read_geometry(path) -> tuple[tuple[int, int, int], tuple[float, float, float]]:
    """(shape, spacing) of a NIfTI-1 file, without loading voxels."""
    raw = _read_bytes(path)
    if len(raw) < _HEADER or struct.unpack_from("<i", raw, 0)[0] != _HEADER:
        raise ValueError(f"{path}: not a little-endian NIfTI-1 file")
    if struct.unpack_from("4s", raw, 344)[0] != _MAGIC:
        raise ValueError(f"{path}: not a single-file NIfTI (magic != n+1)")
    dim = struct.unpack_from("<8h", raw, 40)
    pixdim = struct.unpack_from("<8f", raw, 76)
    return tuple(max(1, d) for d in dim[1:4]), tuple(float(p) for p in pixdim[1:4])


def read_array(path) -> np.ndarray:
    """Voxels of a single-channel NIfTI-1 file as an (X, Y, Z) array."""
    raw = _read_bytes(path)
    shape, _ = read_geometry(path)
    (code,) = struct.unpack_from("<h", raw, 70)
    if code not in _DTYPES:
        raise ValueError(f"{path}: unsupported datatype code {code}")
    dtype = np.dtype(_DTYPES[code])
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    n = int(np.prod(shape))
    flat = np.frombuffer(raw, dtype=dtype, count=n, offset=int(vox_offset))
    return flat.reshape(shape, order="F").copy()


def write_mask(arr: np.ndarray, spacing, path) -> None:
    """Write a non-negative integer (or bool) array as a u8 NIfTI-1 mask."""
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise ValueError(f"mask must be 3D, got ndim={arr.ndim}")
    data = arr.astype(np.uint8)
    hdr = bytearray(_HEADER)
    struct.pack_into("<i", hdr, 0, _HEADER)
    struct.pack_into("<8h", hdr, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, 2)   # u8
    struct.pack_into("<h", hdr, 72, 8)   # bits per voxel
    struct.pack_into("<8f", hdr, 76, 1.0, *spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    struct.pack_into("<2h", hdr, 252, 0, 1)
    srow = np.zeros((3, 4))
    srow[:, :3] = np.diag(spacing)
    struct.pack_into("<12f", hdr, 280, *srow.ravel())
    struct.pack_into("4s", hdr, 344, _MAGIC)
    payload = bytes(hdr) + b"\x00" * 4 + data.tobytes(order="F")
    path = Path(path)
    if path.name.endswith(".gz"):
        with open(path, "wb") as raw_f:
            with gzip.GzipFile(fileobj=raw_f, mode="wb", mtime=0) as f:
                f.write(payload)
    else:
        path.write_bytes(payload)
