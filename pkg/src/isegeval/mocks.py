"""Protocol-conformant reference applications with analytically known behavior.

These mocks read the reference annotation they are supposed to predict
("cheating"), which makes full-pipeline behavior provable without any
ML model. Their fingerprint ids carry a ``mock-`` prefix so they can
never be mistaken for a real algorithm in an evaluation report.

Behaviors:
  oracle_ball(r)     grow the prediction by ball∩ref around foreground
                     points, carve ball∩¬ref around background points
  dilated_truth(k)   always return the reference dilated k times
  constant_empty     always return an empty mask
  perfect_after(j)   empty until iteration j, then the exact reference
  noisy_oracle(p)    oracle_ball, then flip each voxel with probability p
"""

from __future__ import annotations

import json
import socket
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .protocol import PROTOCOL_VERSION
from .simulator import derive_seed
from .volume import LabelMask, read_nifti_mask, write_nifti

BEHAVIOR_VARIANTS = ("oracle_ball", "dilated_truth", "constant_empty",
                     "perfect_after", "noisy_oracle")


@dataclass
class MockBehavior:
    variant: str
    radius_vox: int = 8       # oracle_ball / noisy_oracle
    dilate_vox: int = 0       # dilated_truth
    perfect_at: int = 0       # perfect_after
    flip_prob: float = 0.0    # noisy_oracle

    def __post_init__(self):
        if self.variant not in BEHAVIOR_VARIANTS:
            raise ValueError(f"unknown behavior {self.variant!r}, expected one of {BEHAVIOR_VARIANTS}")
        if min(self.radius_vox, self.dilate_vox, self.perfect_at) < 0:
            raise ValueError("radius/dilate/perfect_at must be >= 0")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError(f"flip_prob must be in [0, 1], got {self.flip_prob}")


def _ball(shape, center, radius) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, s) for s in shape)]
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return d2 <= radius * radius


def _strip_nii(name: str) -> str:
    return name.removesuffix(".gz").removesuffix(".nii")


class _SessionState:
    def __init__(self, session_id: str, ref: np.ndarray, mask_meta: LabelMask):
        self.session_id = session_id
        self.ref = ref
        self.meta = mask_meta  # spacing/affine carrier for written predictions
        self.pred = np.zeros(ref.shape, dtype=bool)


class MockSegmenter:
    """Serves the wire protocol for one behavior; one session at a time."""

    def __init__(self, behavior: MockBehavior, cheat_labels_dir, host: str = "127.0.0.1",
                 port: int = 0, seed: int = 0, workspace=None):
        self.behavior = behavior
        self.cheat_dir = Path(cheat_labels_dir)
        self.seed = seed
        self.workspace = Path(workspace) if workspace else Path(tempfile.mkdtemp(prefix="mockseg-"))
        self.workspace.mkdir(parents=True, exist_ok=True)
        self._listener = socket.create_server((host, port), backlog=8)
        self._listener.settimeout(0.2)
        self.host, self.port = self._listener.getsockname()[:2]
        self._stop = threading.Event()
        self._thread = None

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def fingerprint_doc(self) -> dict:
        return {
            "id": f"mock-{self.behavior.variant}",
            "adaptation": "static",
            "editing": "implicit",
            "seg_subtypes": ["binary"],
            "init_modes": {"point": "full", "scribble": "full"},
            "prompt_support": {"point": "full", "scribble": "full", "box": "none", "lasso": "none"},
            "native_patch": {"voxel_count": "adaptive", "channels": 1, "adaptive": True},
            "trained_modalities": [],
        }

    # -- lifecycle --

    def start(self) -> "MockSegmenter":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self._listener.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def serve_forever(self) -> None:
        """Accept and serve connections until a shutdown message or stop()."""
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                self._serve_connection(conn)
            finally:
                conn.close()

    # -- protocol --

    def _serve_connection(self, conn: socket.socket) -> None:
        f = conn.makefile("rw", encoding="utf-8", newline="\n")

        def send(msg):
            f.write(json.dumps(msg, separators=(",", ":")) + "\n")
            f.flush()

        state: _SessionState | None = None
        while not self._stop.is_set():
            try:
                line = f.readline()
            except OSError:
                return  # client went away mid-read
            if not line:
                return
            try:
                msg = json.loads(line)
                mtype = msg.get("type")
            except (json.JSONDecodeError, AttributeError):
                send({"type": "error", "code": "bad_message", "message": "unparseable message"})
                continue
            try:
                if mtype == "hello":
                    if msg.get("version") != PROTOCOL_VERSION:
                        send({"type": "error", "code": "version_mismatch",
                              "message": f"server speaks version {PROTOCOL_VERSION}"})
                        continue
                    send({"type": "hello_ack", "version": PROTOCOL_VERSION,
                          "fingerprint": self.fingerprint_doc()})
                elif mtype == "start_session":
                    state = self._start_session(msg, send)
                elif mtype == "segment":
                    if state is None or msg.get("session_id") != state.session_id:
                        send({"type": "error", "code": "no_session",
                              "message": "segment outside an open session"})
                        continue
                    self._segment(state, msg, send)
                elif mtype == "end_session":
                    state = None
                elif mtype == "shutdown":
                    self._stop.set()
                    return
                else:
                    send({"type": "error", "code": "bad_message",
                          "message": f"unknown message type {mtype!r}"})
            except OSError:
                return  # client went away mid-write
            except Exception as e:  # protocol servers answer, never crash
                try:
                    send({"type": "error", "code": "internal", "message": f"{type(e).__name__}: {e}"})
                except OSError:
                    return

    def _start_session(self, msg, send) -> _SessionState | None:
        session_id = msg.get("session_id")
        paths = msg.get("image_paths") or []
        if not session_id or not paths:
            send({"type": "error", "code": "bad_request",
                  "message": "start_session needs session_id and image_paths"})
            return None
        name = _strip_nii(Path(paths[0]).name)
        cheat = None
        for suffix in (".nii.gz", ".nii"):
            candidate = self.cheat_dir / f"{name}{suffix}"
            if candidate.exists():
                cheat = candidate
                break
        if cheat is None:
            send({"type": "error", "code": "bad_request",
                  "message": f"no reference annotation for {name} under {self.cheat_dir}"})
            return None
        mask = read_nifti_mask(cheat)
        return _SessionState(session_id, mask.binary(), mask)

    def _segment(self, state: _SessionState, msg, send) -> None:
        iteration = int(msg.get("iteration", -1))
        if iteration < 0:
            send({"type": "error", "code": "bad_request", "message": "missing iteration"})
            return
        prompts = msg.get("prompts", [])
        out = self._predict(state, iteration, prompts)
        label_path = self.workspace / f"{state.session_id}_iter{iteration:03d}.nii.gz"
        write_nifti(LabelMask(out.astype(np.uint8), state.meta.spacing, state.meta.affine), label_path)
        # inference_ms is fixed so reruns of a seeded experiment are byte-identical
        send({"type": "segmented", "session_id": state.session_id, "iteration": iteration,
              "label_path": str(label_path), "inference_ms": 0.0})

    # -- behaviors --

    def _apply_point(self, state: _SessionState, coord, label) -> None:
        ball = _ball(state.ref.shape, coord, self.behavior.radius_vox)
        if label == "foreground":
            state.pred |= ball & state.ref
        else:
            state.pred &= ~(ball & ~state.ref)

    def _predict(self, state: _SessionState, iteration: int, prompts) -> np.ndarray:
        b = self.behavior
        if b.variant == "constant_empty":
            return np.zeros(state.ref.shape, dtype=bool)
        if b.variant == "dilated_truth":
            if b.dilate_vox == 0:
                return state.ref.copy()
            return ndimage.binary_dilation(state.ref, iterations=b.dilate_vox)
        if b.variant == "perfect_after":
            return state.ref.copy() if iteration >= b.perfect_at else np.zeros(state.ref.shape, dtype=bool)

        # oracle_ball and noisy_oracle accumulate ball edits in session state;
        # re-applying a prompt is a no-op, so atomic full-set replays are safe
        for p in prompts:
            kind = p.get("kind")
            if kind not in ("point", "scribble"):
                raise ValueError(f"mock supports point/scribble prompts, got {kind!r}")
            for coord in p.get("coords", []):
                self._apply_point(state, tuple(int(x) for x in coord), p.get("class"))
        if b.variant == "noisy_oracle" and b.flip_prob > 0:
            rng = np.random.default_rng(derive_seed(self.seed, state.session_id, iteration))
            flips = rng.random(state.ref.shape) < b.flip_prob
            return state.pred ^ flips
        return state.pred.copy()


def serve(behavior: MockBehavior, cheat_labels_dir, host: str = "127.0.0.1", port: int = 0,
          seed: int = 0, workspace=None, announce=None) -> None:
    """Run a mock application until it receives a shutdown message."""
    server = MockSegmenter(behavior, cheat_labels_dir, host, port, seed, workspace)
    if announce is not None:
        announce(server)
    try:
        server.serve_forever()
    finally:
        server._listener.close()
