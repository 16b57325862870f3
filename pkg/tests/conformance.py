"""Application conformance checks, shared by mock tests and adapter tests.

Any protocol server (built-in mock or externally served adapter) must
pass every check here to be drivable by the harness.
"""

import numpy as np

from isegeval.protocol import Prompt, SegmentationRequest, connect
from isegeval.volume import read_nifti_mask


def run_conformance_suite(endpoint: str, sample, shape) -> None:
    """Drive one application through handshake, lifecycle, and contracts."""
    # handshake carries a parseable fingerprint
    session = connect(endpoint)
    assert isinstance(session.fingerprint, dict) and session.fingerprint.get("id")
    from isegeval.planning import parse_fingerprint

    parse_fingerprint(session.fingerprint)

    ref = read_nifti_mask(sample.label_path)
    fg = tuple(int(x) for x in np.argwhere(ref.binary())[0])

    # segment outside a session answers with an error and the connection survives
    session._session_id = "unopened"
    session._expected_shape = tuple(shape)
    bad = SegmentationRequest("unopened", 0, [str(sample.image_path)],
                              [Prompt("point", "foreground", (fg,))])
    from isegeval.errors import ApplicationError

    try:
        session.request_segmentation(bad, timeout_s=30)
        raise AssertionError("expected an application error for segment outside a session")
    except ApplicationError:
        pass
    session._session_id = None
    session._expected_shape = None

    # proper session: ids echoed, native-space shape, contiguous iterations
    session.start_session("conformance", "binary segmentation of sphere",
                          [str(sample.image_path)], tuple(shape))
    masks = []
    for t in range(3):
        req = SegmentationRequest(
            "conformance", t, [str(sample.image_path)],
            [Prompt("point", "foreground", (fg,))],
            [] if t == 0 else [Prompt("point", "foreground", (fg,))] * t)
        resp = session.request_segmentation(req, timeout_s=30)
        assert resp.session_id == "conformance"
        assert resp.iteration == t
        assert resp.inference_ms >= 0
        assert resp.mask.shape == tuple(shape)
        masks.append(resp.mask.binary())
    session.end_session()
    session.close()

    # replay: a fresh session given identical requests yields identical masks
    with connect(endpoint) as session:
        session.start_session("conformance", "binary segmentation of sphere",
                              [str(sample.image_path)], tuple(shape))
        for t in range(3):
            req = SegmentationRequest(
                "conformance", t, [str(sample.image_path)],
                [Prompt("point", "foreground", (fg,))],
                [] if t == 0 else [Prompt("point", "foreground", (fg,))] * t)
            resp = session.request_segmentation(req, timeout_s=30)
            assert np.array_equal(resp.mask.binary(), masks[t]), f"replay diverged at iteration {t}"
        session.end_session()
