"""Wire protocol client for driving segmentation applications as online sessions.

Transport is newline-delimited JSON over a TCP stream; volumetric
payloads travel as file paths in a shared workspace. All coordinates on
the wire are voxel indices in the ORIGINAL image grid, and returned
masks must match the original image shape exactly: the harness never
resamples a prediction, a wrong-shape response is a hard failure.

Message schema (field names normative):
  {"type": "hello", "version": v}
  {"type": "hello_ack", "version": v, "fingerprint": {...}}
  {"type": "start_session", "session_id": s, "task_text": t, "image_paths": [...]}
  {"type": "segment", "session_id": s, "iteration": i, "prompts": [...], "prompt_memory": [...]}
  {"type": "segmented", "session_id": s, "iteration": i, "label_path": p, "inference_ms": ms}
  {"type": "error", "code": c, "message": m}
  {"type": "end_session", "session_id": s}
  {"type": "shutdown"}

Prompts are encoded as {"kind": k, "class": c, "coords": [[i, j, k], ...]}.
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass, field

from .errors import (
    ApplicationError,
    ConnectError,
    InferenceTimeout,
    NativeSpaceViolation,
    ProtocolError,
    ProtocolVersionError,
)
from .volume import LabelMask, read_nifti_mask

PROTOCOL_VERSION = 1

_COORD_ARITY = {"point": (1, 1), "box": (2, 2), "scribble": (2, None), "lasso": (2, None)}


@dataclass
class Prompt:
    """One user interaction: class intent plus voxel coordinates."""

    kind: str  # point | scribble | box | lasso
    label: str | int  # "foreground" | "background" | label id
    coords: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if self.kind not in _COORD_ARITY:
            raise ValueError(f"unknown prompt kind {self.kind!r}")
        self.coords = tuple(tuple(int(x) for x in c) for c in self.coords)
        lo, hi = _COORD_ARITY[self.kind]
        if len(self.coords) < lo or (hi is not None and len(self.coords) > hi):
            raise ValueError(f"{self.kind} prompt needs {lo}{'+' if hi is None else ''} coords, "
                             f"got {len(self.coords)}")
        if any(len(c) != 3 for c in self.coords):
            raise ValueError("coords must be (i, j, k) triples")

    def to_wire(self) -> dict:
        return {"kind": self.kind, "class": self.label, "coords": [list(c) for c in self.coords]}

    @classmethod
    def from_wire(cls, doc: dict) -> "Prompt":
        return cls(doc["kind"], doc["class"], tuple(tuple(c) for c in doc["coords"]))


@dataclass
class SegmentationRequest:
    session_id: str
    iteration: int
    image_paths: list[str]
    prompts: list[Prompt]
    prompt_memory: list[Prompt] = field(default_factory=list)
    task_text: str = ""

    def __post_init__(self):
        if self.iteration < 0:
            raise ValueError(f"iteration must be >= 0, got {self.iteration}")
        if self.iteration == 0 and self.prompt_memory:
            raise ValueError("iteration 0 must have empty prompt memory")


@dataclass
class SegmentationResponse:
    session_id: str
    iteration: int
    label_path: str
    inference_ms: float
    mask: LabelMask = None  # loaded and shape-validated, not on the wire


def editing_payload(mode: str, history: list[Prompt], current: list[Prompt]):
    """Split prompts into (prompts, prompt_memory) for an editing mode.

    implicit: the application keeps its own memory, so it receives the
    current prompts plus the full history for reference. explicit: only
    the current prompts. atomic: the full accumulated prompt set is
    presented as the current prompts and inference re-runs from scratch.
    """
    if mode == "implicit":
        return list(current), list(history)
    if mode == "explicit":
        return list(current), []
    if mode == "atomic":
        return list(history) + list(current), []
    raise ValueError(f"unknown editing mode {mode!r}")


def _send(sock_file, msg: dict) -> None:
    sock_file.write(json.dumps(msg, separators=(",", ":")) + "\n")
    sock_file.flush()


def _recv(sock_file) -> dict:
    line = sock_file.readline()
    if not line:
        raise ProtocolError("connection closed by application")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"unparseable message: {line[:200]!r}") from e
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError(f"message without type: {line[:200]!r}")
    return msg


class ClientSession:
    """One connection to a segmentation application.

    Strict request/response alternation: a session carries one in-flight
    request at a time. Sessions are confined to one driver thread at a
    time but may be handed off between iterations.
    """

    def __init__(self, sock: socket.socket, sock_file, fingerprint: dict, endpoint: str):
        self._sock = sock
        self._file = sock_file
        self.fingerprint = fingerprint
        self.endpoint = endpoint
        self._session_id = None
        self._expected_shape = None

    # -- lifecycle --

    def start_session(self, session_id: str, task_text: str, image_paths: list[str],
                      expected_shape: tuple[int, int, int]) -> None:
        if self._session_id is not None:
            raise ValueError(f"session {self._session_id} still open")
        _send(self._file, {"type": "start_session", "session_id": session_id,
                           "task_text": task_text, "image_paths": [str(p) for p in image_paths]})
        self._session_id = session_id
        self._expected_shape = tuple(expected_shape)

    def end_session(self) -> None:
        if self._session_id is not None:
            _send(self._file, {"type": "end_session", "session_id": self._session_id})
            self._session_id = None
            self._expected_shape = None

    def shutdown_application(self) -> None:
        _send(self._file, {"type": "shutdown"})

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        try:
            self.end_session()
        except Exception:
            pass
        self.close()

    # -- requests --

    def request_segmentation(self, req: SegmentationRequest, timeout_s: float = 60.0) -> SegmentationResponse:
        """Send one segmentation request and validate the reply.

        The returned mask is loaded from the reply's label path and its
        shape checked against the session's native image grid; any
        mismatch raises NativeSpaceViolation rather than resampling.
        """
        if req.session_id != self._session_id:
            raise ValueError(f"request for session {req.session_id!r}, open session is {self._session_id!r}")
        for p in list(req.prompts) + list(req.prompt_memory):
            for c in p.coords:
                if any(not 0 <= x < s for x, s in zip(c, self._expected_shape)):
                    raise ValueError(f"prompt coord {c} outside image shape {self._expected_shape}")
        _send(self._file, {
            "type": "segment",
            "session_id": req.session_id,
            "iteration": req.iteration,
            "prompts": [p.to_wire() for p in req.prompts],
            "prompt_memory": [p.to_wire() for p in req.prompt_memory],
        })
        self._sock.settimeout(timeout_s)
        try:
            msg = _recv(self._file)
        except (socket.timeout, TimeoutError) as e:
            raise InferenceTimeout(f"no reply within {timeout_s}s from {self.endpoint}") from e
        finally:
            self._sock.settimeout(None)
        if msg["type"] == "error":
            raise ApplicationError(f"{msg.get('code', '?')}: {msg.get('message', '')}")
        if msg["type"] != "segmented":
            raise ProtocolError(f"expected 'segmented', got {msg['type']!r}")
        if msg.get("session_id") != req.session_id or msg.get("iteration") != req.iteration:
            raise ProtocolError(
                f"reply ids ({msg.get('session_id')}, {msg.get('iteration')}) do not echo "
                f"request ({req.session_id}, {req.iteration})")
        mask = read_nifti_mask(msg["label_path"])
        if mask.shape != self._expected_shape:
            raise NativeSpaceViolation(
                f"application answered in shape {mask.shape}, native image grid is "
                f"{self._expected_shape}; evaluation must stay in the original image space")
        return SegmentationResponse(msg["session_id"], msg["iteration"], msg["label_path"],
                                    float(msg["inference_ms"]), mask)


def connect(endpoint: str, timeout_s: float = 10.0) -> ClientSession:
    """Open a session to ``host:port`` and exchange the version handshake."""
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    try:
        sock = socket.create_connection((host, int(port)), timeout=timeout_s)
    except OSError as e:
        raise ConnectError(f"cannot connect to {endpoint}: {e}") from e
    sock_file = sock.makefile("rw", encoding="utf-8", newline="\n")
    try:
        _send(sock_file, {"type": "hello", "version": PROTOCOL_VERSION})
        msg = _recv(sock_file)
    except (socket.timeout, TimeoutError) as e:
        sock.close()
        raise ConnectError(f"handshake timed out with {endpoint}") from e
    except ProtocolError:
        sock.close()
        raise
    if msg["type"] != "hello_ack":
        sock.close()
        raise ProtocolError(f"expected hello_ack, got {msg['type']!r}")
    if msg.get("version") != PROTOCOL_VERSION:
        sock.close()
        raise ProtocolVersionError(
            f"application speaks version {msg.get('version')}, client speaks {PROTOCOL_VERSION}")
    sock.settimeout(None)
    return ClientSession(sock, sock_file, msg.get("fingerprint", {}), endpoint)
