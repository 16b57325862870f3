"""Synthetic conforming datasets: spheres with known geometry.

The harness consumes any dataset laid out as ``<root>/images/*.nii[.gz]``
with identically named reference annotations under ``<root>/labels/``;
these helpers build small ones so pipelines can be exercised end to end
without real data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .simulator import Sample
from .volume import LabelMask, Volume, write_nifti


def sphere_mask(shape, center, radius) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, s) for s in shape)]
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return d2 <= radius * radius


def make_sphere_dataset(root, n_samples: int, shape=(64, 64, 64), radius_range=(5, 15),
                        spacing=(1.0, 1.0, 1.0), seed: int = 0, noise: float = 0.05) -> list[Sample]:
    """Write ``n_samples`` noisy sphere volumes with binary sphere labels."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_samples):
        radius = int(rng.integers(radius_range[0], radius_range[1], endpoint=True))
        center = tuple(int(rng.integers(radius + 1, s - radius - 1)) for s in shape)
        mask = sphere_mask(shape, center, radius)
        image = rng.normal(0.0, noise, size=shape).astype(np.float32)
        image[mask] += 1.0
        name = f"sphere_{i:02d}"
        img_path = root / "images" / f"{name}.nii.gz"
        lbl_path = root / "labels" / f"{name}.nii.gz"
        write_nifti(Volume(image, spacing), img_path)
        write_nifti(LabelMask(mask.astype(np.uint8), spacing), lbl_path)
        samples.append(Sample(name, img_path, lbl_path))
    return samples
