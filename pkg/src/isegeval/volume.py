"""Volumetric data model, NIfTI-1 subset I/O, preprocessing, and component utilities.

Volumes carry their physical spacing and orientation so every downstream
metric can be computed in the original image grid. The reader/writer
covers a deliberately small NIfTI-1 subset: single-file ``n+1`` images,
little-endian, unscaled intensities, dtypes u8/i16/i32/f32/f64, with an
optional 4th dimension interpreted as channels.
"""

from __future__ import annotations

import gzip
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import IoError, MalformedFile, OutOfCrop, UnsupportedDatatype

VoxelCoord = tuple[int, int, int]

# NIfTI-1 datatype codes for the supported subset.
_DTYPE_BY_CODE = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    64: np.dtype("<f8"),
}
_CODE_BY_KIND = {"u1": 2, "i2": 4, "i4": 8, "f4": 16, "f8": 64}


def _kind(dtype: np.dtype) -> str:
    """Byte-order-free dtype tag, e.g. '<i2' -> 'i2'."""
    return dtype.str.lstrip("<>|=")

_HEADER_SIZE = 348
_VOX_OFFSET = 352.0
_MAGIC = b"n+1\x00"

_CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


def _default_affine(spacing) -> np.ndarray:
    aff = np.zeros((3, 4))
    aff[:, :3] = np.diag(spacing)
    return aff


@dataclass
class Volume:
    """A 3D scalar grid with physical spacing and orientation.

    ``data`` is channel-major with shape ``(channels, *shape)``; single
    channel volumes still carry the leading axis. Instances are treated
    as immutable after construction and are safe to share across threads.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray = None  # 3x4, voxel index -> world mm

    def __post_init__(self):
        if self.data.ndim == 3:
            self.data = self.data[np.newaxis]
        if self.data.ndim != 4:
            raise ValueError(f"volume data must be 3D or channel-major 4D, got ndim={self.data.ndim}")
        kind = _kind(self.data.dtype)
        if kind not in _CODE_BY_KIND:
            raise UnsupportedDatatype(f"unsupported element kind {self.data.dtype}")
        if any(s <= 0 for s in self.data.shape):
            raise ValueError(f"degenerate volume shape {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(not (s > 0 and math.isfinite(s)) for s in self.spacing):
            raise ValueError(f"spacing must be 3 positive finite reals, got {self.spacing}")
        if self.affine is None:
            self.affine = _default_affine(self.spacing)
        self.affine = np.asarray(self.affine, dtype=np.float64)
        if self.affine.shape != (3, 4):
            raise ValueError(f"affine must be 3x4, got {self.affine.shape}")
        if np.linalg.det(self.affine[:, :3]) == 0:
            raise ValueError("affine rotation block is singular")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def channel(self, c: int = 0) -> np.ndarray:
        """3D view of one channel."""
        return self.data[c]


@dataclass
class LabelMask:
    """Integer label grid sharing the Volume geometry contract."""

    voxels: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray = None

    def __post_init__(self):
        if self.voxels.ndim != 3:
            raise ValueError(f"label mask must be 3D, got ndim={self.voxels.ndim}")
        kind = _kind(self.voxels.dtype)
        if kind not in ("u1", "i2", "i4"):
            raise UnsupportedDatatype(f"label mask requires u8/i16/i32 voxels, got {self.voxels.dtype}")
        if self.voxels.size and int(self.voxels.min()) < 0:
            raise UnsupportedDatatype("label mask requires non-negative labels")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(not (s > 0 and math.isfinite(s)) for s in self.spacing):
            raise ValueError(f"spacing must be 3 positive finite reals, got {self.spacing}")
        if self.affine is None:
            self.affine = _default_affine(self.spacing)
        self.affine = np.asarray(self.affine, dtype=np.float64)

    @classmethod
    def from_array(cls, arr: np.ndarray, spacing, affine=None) -> "LabelMask":
        """Build a mask from any integer or boolean array, narrowing the dtype."""
        arr = np.asarray(arr)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        elif arr.dtype.kind not in "ui":
            raise UnsupportedDatatype(f"label mask requires integer voxels, got {arr.dtype}")
        if arr.size and int(arr.min()) < 0:
            raise UnsupportedDatatype("label mask requires non-negative labels")
        if _kind(arr.dtype) not in ("u1", "i2", "i4"):
            arr = arr.astype(np.uint8 if (arr.size == 0 or arr.max() < 256) else np.int32)
        return cls(arr, spacing, affine)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def binary(self, label: int = None) -> np.ndarray:
        """Boolean view: ``voxels == label``, or any foreground when label is None."""
        if label is None:
            return self.voxels > 0
        return self.voxels == label


# --- NIfTI-1 subset -------------------------------------------------------


def _qform_affine(quatern, qoffset, pixdim) -> np.ndarray:
    b, c, d = quatern
    a = math.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    rot = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
    ])
    qfac = -1.0 if pixdim[0] < 0 else 1.0
    scale = np.array([pixdim[1], pixdim[2], pixdim[3] * qfac])
    aff = np.zeros((3, 4))
    aff[:, :3] = rot * scale
    aff[:, 3] = qoffset
    return aff


def _read_raw(path: Path) -> bytes:
    try:
        with open(path, "rb") as f:
            head = f.read(2)
            f.seek(0)
            if head == b"\x1f\x8b":
                with gzip.open(f) as gz:
                    return gz.read()
            return f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def read_nifti(path) -> Volume:
    """Read a NIfTI-1 single file (optionally gzipped) into a Volume.

    Shape comes from dim[1..3], spacing from pixdim[1..3], orientation
    from the sform when sform_code > 0 and from the qform otherwise.
    When dim[4] > 1 the 4th dimension maps to channels.

    Raises MalformedFile for structural problems and UnsupportedDatatype
    for dtypes or intensity scaling outside the supported subset.
    """
    path = Path(path)
    raw = _read_raw(path)
    if len(raw) < _HEADER_SIZE:
        raise MalformedFile(f"{path}: truncated header ({len(raw)} bytes)")

    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != _HEADER_SIZE:
        raise MalformedFile(f"{path}: sizeof_hdr={sizeof_hdr}, not little-endian NIfTI-1")
    magic = struct.unpack_from("4s", raw, 344)[0]
    if magic != _MAGIC:
        raise MalformedFile(f"{path}: magic {magic!r} is not 'n+1' (single-file NIfTI-1)")

    dim = struct.unpack_from("<8h", raw, 40)
    (datatype,) = struct.unpack_from("<h", raw, 70)
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    qform_code, sform_code = struct.unpack_from("<2h", raw, 252)

    if not 1 <= dim[0] <= 7:
        raise MalformedFile(f"{path}: dim[0]={dim[0]} out of range")
    if dim[0] > 4 and any(d > 1 for d in dim[5:dim[0] + 1]):
        raise MalformedFile(f"{path}: more than 4 non-trivial dimensions")
    shape = tuple(max(1, d) for d in dim[1:4])
    channels = max(1, dim[4]) if dim[0] >= 4 else 1
    if any(d < 1 for d in dim[1:dim[0] + 1]):
        raise MalformedFile(f"{path}: non-positive dimension in {dim[1:dim[0] + 1]}")

    if datatype not in _DTYPE_BY_CODE:
        raise UnsupportedDatatype(f"{path}: NIfTI datatype code {datatype}")
    dtype = _DTYPE_BY_CODE[datatype]
    if scl_slope not in (0.0, 1.0) or scl_inter != 0.0:
        raise UnsupportedDatatype(f"{path}: intensity-scaled files not supported "
                                  f"(slope={scl_slope}, inter={scl_inter})")

    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not (s > 0 and math.isfinite(s)) for s in spacing):
        raise MalformedFile(f"{path}: non-positive pixdim {spacing}")

    if sform_code > 0:
        srow = struct.unpack_from("<12f", raw, 280)
        affine = np.array(srow, dtype=np.float64).reshape(3, 4)
    elif qform_code > 0:
        quatern = struct.unpack_from("<3f", raw, 256)
        qoffset = struct.unpack_from("<3f", raw, 268)
        affine = _qform_affine(quatern, qoffset, pixdim)
    else:
        affine = _default_affine(spacing)

    offset = int(vox_offset)
    if offset < _HEADER_SIZE:
        raise MalformedFile(f"{path}: vox_offset {vox_offset} inside header")
    nbytes = int(np.prod(shape)) * channels * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise MalformedFile(f"{path}: truncated data section "
                            f"(need {offset + nbytes} bytes, have {len(raw)})")

    flat = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)) * channels, offset=offset)
    # On disk the first axis varies fastest; dim[4] (channels) is slowest.
    data = flat.reshape(shape + (channels,), order="F").transpose(3, 0, 1, 2).copy()
    return Volume(data, spacing, affine)


def read_nifti_mask(path) -> LabelMask:
    """Read a single-channel integer NIfTI file as a LabelMask."""
    v = read_nifti(path)
    if v.channels != 1:
        raise UnsupportedDatatype(f"{path}: label mask must be single-channel, got {v.channels}")
    if v.data.dtype.kind not in "ui":
        raise UnsupportedDatatype(f"{path}: label mask requires integer voxels, got {v.data.dtype}")
    return LabelMask(v.channel(0), v.spacing, v.affine)


def write_nifti(v: Volume | LabelMask, path) -> None:
    """Write a Volume or LabelMask as single-file NIfTI-1 (gzipped iff path ends in .gz).

    The on-disk representation round-trips bit-exactly through
    :func:`read_nifti` for all supported dtypes (spacing and orientation
    are quantised to float32 by the format on the first write).
    """
    path = Path(path)
    if isinstance(v, LabelMask):
        data = v.voxels[np.newaxis]
        spacing, affine = v.spacing, v.affine
    else:
        data, spacing, affine = v.data, v.spacing, v.affine
    channels = data.shape[0]
    shape = data.shape[1:]
    code = _CODE_BY_KIND[_kind(data.dtype)]

    hdr = bytearray(_HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, _HEADER_SIZE)
    ndim = 3 if channels == 1 else 4
    struct.pack_into("<8h", hdr, 40, ndim, *shape, channels, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, data.dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, _VOX_OFFSET)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # slope/inter: identity
    struct.pack_into("<2h", hdr, 252, 0, 1)      # qform off, sform on
    struct.pack_into("<12f", hdr, 280, *np.asarray(affine, dtype=np.float64).ravel())
    struct.pack_into("4s", hdr, 344, _MAGIC)

    le = data.astype(data.dtype.newbyteorder("<"), copy=False)
    payload = bytes(hdr) + b"\x00" * 4 + le.transpose(1, 2, 3, 0).tobytes(order="F")
    try:
        if path.name.endswith(".gz"):
            with open(path, "wb") as raw:
                # fixed mtime keeps repeated writes byte-identical
                with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
                    f.write(payload)
        else:
            with open(path, "wb") as f:
                f.write(payload)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


# --- preprocessing --------------------------------------------------------


def clip_normalize(v: Volume, lo_pct: float, hi_pct: float, out_max: float) -> Volume:
    """Percentile-clip and min-max normalise intensities over the full volume.

    Percentiles use the linear-interpolation quantile over all voxels
    (all channels included). Values are clipped to [p_lo, p_hi] and
    affinely mapped so p_lo -> 0 and p_hi -> out_max. A constant volume
    (p_lo == p_hi) maps to all zeros with a warning.
    """
    if not (0 <= lo_pct < hi_pct <= 100):
        raise ValueError(f"need 0 <= lo < hi <= 100, got ({lo_pct}, {hi_pct})")
    p_lo, p_hi = np.percentile(v.data, [lo_pct, hi_pct])
    if p_lo == p_hi:
        warnings.warn("constant volume: clip_normalize output is all zeros", stacklevel=2)
        out = np.zeros_like(v.data, dtype=np.float32)
    else:
        clipped = np.clip(v.data.astype(np.float64), p_lo, p_hi)
        out = ((clipped - p_lo) / (p_hi - p_lo) * out_max).astype(np.float32)
    return Volume(out, v.spacing, v.affine)


def remap_index(c: VoxelCoord, from_shape, to_shape) -> VoxelCoord:
    """Remap a voxel index between grids via voxel-center normalised mapping.

    Per axis: ``clamp(floor(((i + 0.5) / from) * to), 0, to - 1)``.
    """
    out = []
    for i, f, t in zip(c, from_shape, to_shape):
        if not 0 <= i < f:
            raise ValueError(f"coordinate {c} outside source shape {tuple(from_shape)}")
        out.append(min(max(math.floor((i + 0.5) / f * t), 0), t - 1))
    return tuple(out)


def point_to_relative(c: VoxelCoord, crop_origin: VoxelCoord, crop_shape) -> tuple[float, float, float]:
    """Express a voxel index as relative [0,1] coordinates of a crop box."""
    out = []
    for i, o, e in zip(c, crop_origin, crop_shape):
        if not o <= i < o + e:
            raise OutOfCrop(f"point {c} outside crop origin={tuple(crop_origin)} shape={tuple(crop_shape)}")
        out.append((i - o + 0.5) / e)
    return tuple(out)


# --- connected components -------------------------------------------------


def connected_components(mask: np.ndarray, connectivity: int = 26):
    """Label a binary mask; returns (labels, count, sizes[1..count])."""
    if connectivity not in _CONNECTIVITY_RANK:
        raise ValueError(f"connectivity must be one of 6/18/26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, _CONNECTIVITY_RANK[connectivity])
    labels, count = ndimage.label(mask, structure=structure)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return labels, count, sizes


def largest_component(m: LabelMask, connectivity: int = 26) -> LabelMask:
    """Zero out every foreground voxel outside the largest connected component.

    Ties keep the component whose first voxel comes earliest in scan
    order. An empty mask is returned unchanged.
    """
    fg = m.binary()
    labels, count, sizes = connected_components(fg, connectivity)
    if count <= 1:
        return LabelMask(m.voxels.copy(), m.spacing, m.affine)
    keep = int(np.argmax(sizes)) + 1  # argmax takes the lowest label on ties
    out = np.where(labels == keep, m.voxels, 0).astype(m.voxels.dtype)
    return LabelMask(out, m.spacing, m.affine)
