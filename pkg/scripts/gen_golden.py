#!/usr/bin/env python3
"""Regenerate the cross-component golden vectors under testdata/golden/.

Adapter-side reimplementations of the preprocessing utilities must match
these vectors: voxel indices exactly, normalised intensities to 1e-6.
"""

import json
from pathlib import Path

import numpy as np

from isegeval.volume import Volume, clip_normalize, point_to_relative, remap_index

OUT = Path(__file__).resolve().parents[1] / "testdata" / "golden"


def gen_clip_normalize():
    rng = np.random.default_rng(1234)
    cases = []
    specs = [
        ((4, 4, 4), 0.0, 100.0, 255.0, "uniform"),
        ((5, 3, 2), 0.5, 99.5, 255.0, "normal"),
        ((6, 6, 6), 5.0, 95.0, 1.0, "normal"),
        ((3, 3, 3), 0.5, 99.5, 255.0, "constant"),
        ((4, 5, 6), 2.5, 97.5, 100.0, "heavy-tailed"),
    ]
    for shape, lo, hi, out_max, kind in specs:
        if kind == "uniform":
            data = rng.uniform(-50, 150, size=shape)
        elif kind == "constant":
            data = np.full(shape, 7.0)
        elif kind == "heavy-tailed":
            data = rng.standard_cauchy(size=shape) * 10
        else:
            data = rng.normal(100, 25, size=shape)
        data = data.astype(np.float64)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = clip_normalize(Volume(data, (1, 1, 1)), lo, hi, out_max)
        cases.append({
            "shape": list(shape),
            "input": [float(x) for x in data.ravel()],
            "lo_pct": lo,
            "hi_pct": hi,
            "out_max": out_max,
            "expected": [float(x) for x in out.channel(0).ravel()],
        })
    return {"tolerance": 1e-6, "cases": cases}


def gen_remap_index():
    rng = np.random.default_rng(5678)
    cases = []
    for _ in range(40):
        f = [int(x) for x in rng.integers(1, 512, size=3)]
        t = [int(x) for x in rng.integers(1, 512, size=3)]
        c = [int(rng.integers(0, fi)) for fi in f]
        cases.append({"coord": c, "from_shape": f, "to_shape": t,
                      "expected": list(remap_index(tuple(c), f, t))})
    cases.append({"coord": [5, 5, 5], "from_shape": [10, 10, 10],
                  "to_shape": [20, 20, 20],
                  "expected": list(remap_index((5, 5, 5), (10, 10, 10), (20, 20, 20)))})
    return {"tolerance": 0, "cases": cases}


def gen_point_to_relative():
    rng = np.random.default_rng(91011)
    cases = []
    for _ in range(40):
        origin = [int(x) for x in rng.integers(0, 100, size=3)]
        extent = [int(x) for x in rng.integers(1, 64, size=3)]
        coord = [o + int(rng.integers(0, e)) for o, e in zip(origin, extent)]
        cases.append({"coord": coord, "crop_origin": origin, "crop_shape": extent,
                      "expected": list(point_to_relative(tuple(coord), tuple(origin), extent))})
    return {"tolerance": 1e-6, "cases": cases}


def write(name, doc):
    OUT.mkdir(parents=True, exist_ok=True)
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {path} ({len(doc['cases'])} cases)")


if __name__ == "__main__":
    write("clip_normalize", gen_clip_normalize())
    write("remap_index", gen_remap_index())
    write("point_to_relative", gen_point_to_relative())
