"""The harness must keep matching the committed cross-component vectors."""

import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from isegeval.volume import Volume, clip_normalize, point_to_relative, remap_index

GOLDEN = Path(__file__).resolve().parents[1] / "testdata" / "golden"


def load(name):
    return json.loads((GOLDEN / f"{name}.json").read_text())


def test_clip_normalize_golden():
    doc = load("clip_normalize")
    for case in doc["cases"]:
        data = np.array(case["input"], dtype=np.float64).reshape(case["shape"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out = clip_normalize(Volume(data, (1, 1, 1)),
                                 case["lo_pct"], case["hi_pct"], case["out_max"])
        expected = np.array(case["expected"], dtype=np.float32).reshape(case["shape"])
        np.testing.assert_allclose(out.channel(0), expected, atol=doc["tolerance"], rtol=0)


def test_remap_index_golden():
    doc = load("remap_index")
    for case in doc["cases"]:
        got = remap_index(tuple(case["coord"]), case["from_shape"], case["to_shape"])
        assert list(got) == case["expected"]  # indices match exactly


def test_point_to_relative_golden():
    doc = load("point_to_relative")
    for case in doc["cases"]:
        got = point_to_relative(tuple(case["coord"]), tuple(case["crop_origin"]),
                                case["crop_shape"])
        assert got == pytest.approx(case["expected"], abs=doc["tolerance"])
