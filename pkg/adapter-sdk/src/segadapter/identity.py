"""Example adapter: always answers an empty mask in the original image grid.

Useful as a template and as the reference application for conformance
testing — it touches every SDK surface without any model behind it.

Run with ``python -m segadapter.identity [--host H] [--port P]``.
"""

from __future__ import annotations

import argparse

import numpy as np

from . import nifti
from .server import AdapterHooks, serve_adapter


class IdentityAdapter(AdapterHooks):
    fingerprint = {
        "id": "identity-adapter",
        "adaptation": "static",
        "editing": "explicit",
        "seg_subtypes": ["binary"],
        "init_modes": {"point": "full", "scribble": "full"},
        "prompt_support": {"point": "full", "scribble": "full", "box": "full", "lasso": "full"},
        "native_patch": {"voxel_count": "adaptive", "channels": 1, "adaptive": True},
        "trained_modalities": [],
    }

    def on_start_session(self, task_text, image_paths):
        shape, _ = nifti.read_geometry(image_paths[0])
        return {"shape": shape}

    def on_segment(self, state, iteration, prompts, prompt_memory):
        return np.zeros(state["shape"], dtype=np.uint8)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0)
    parser.add_argument("--workspace", default=None)
    args = parser.parse_args(argv)
    serve_adapter(IdentityAdapter(), host=args.host, port=args.port, workspace=args.workspace,
                  announce=lambda s: print(f"identity-adapter listening on {s.endpoint}", flush=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
