"""Preprocessing utilities adapters need, mirroring the harness definitions.

Reimplemented here so adapters do not depend on the harness package; the
shared contract is the golden-vector files shipped with the harness
(exact for voxel indices, 1e-6 for normalised intensities).
"""

from __future__ import annotations

import math

import numpy as np


def clip_normalize(arr: np.ndarray, lo_pct: float, hi_pct: float, out_max: float) -> np.ndarray:
    """Clip to the [lo, hi] percentiles (linear interpolation over all
    voxels) and map affinely onto [0, out_max]; constant input maps to zeros."""
    if not 0 <= lo_pct < hi_pct <= 100:
        raise ValueError(f"need 0 <= lo < hi <= 100, got ({lo_pct}, {hi_pct})")
    arr = np.asarray(arr, dtype=np.float64)
    p_lo = float(np.quantile(arr, lo_pct / 100.0))
    p_hi = float(np.quantile(arr, hi_pct / 100.0))
    if p_lo == p_hi:
        return np.zeros_like(arr, dtype=np.float32)
    return ((np.clip(arr, p_lo, p_hi) - p_lo) / (p_hi - p_lo) * out_max).astype(np.float32)


def remap_index(coord, from_shape, to_shape):
    """Voxel-center mapping between grids: clamp(floor(((i+0.5)/from)*to))."""
    out = []
    for i, f, t in zip(coord, from_shape, to_shape):
        if not 0 <= i < f:
            raise ValueError(f"coordinate {tuple(coord)} outside grid {tuple(from_shape)}")
        out.append(min(max(math.floor((i + 0.5) / f * t), 0), t - 1))
    return tuple(out)


def point_to_relative(coord, crop_origin, crop_shape):
    """Voxel index -> relative [0, 1] coordinates of a crop box."""
    out = []
    for i, o, e in zip(coord, crop_origin, crop_shape):
        if not o <= i < o + e:
            raise ValueError(f"point {tuple(coord)} outside crop "
                             f"origin={tuple(crop_origin)} shape={tuple(crop_shape)}")
        out.append((i - o + 0.5) / e)
    return tuple(out)
