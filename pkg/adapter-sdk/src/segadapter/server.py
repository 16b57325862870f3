"""Protocol server wrapping user hooks into a conformant application.

The SDK owns the socket loop, message framing, session bookkeeping, and
mask emission; the hooks own the model. A hook exception is answered
with an error message and the session survives, so one bad request never
takes the application offline.
"""

from __future__ import annotations

import json
import socket
import tempfile
import threading
import time
from pathlib import Path

from . import nifti

PROTOCOL_VERSION = 1


class AdapterHooks:
    """Subclass and override to expose a model as an application.

    ``fingerprint`` must be a valid fingerprint document (see the harness
    configuration docs); ``on_segment`` must return a label array with
    exactly the original image's grid, the native-space contract every
    response is held to.
    """

    fingerprint: dict = {"id": "unnamed-adapter"}

    def on_start_session(self, task_text: str, image_paths: list[str]):
        """Return opaque per-session state (model context, cached image...)."""
        raise NotImplementedError

    def on_segment(self, state, iteration: int, prompts: list[dict],
                   prompt_memory: list[dict]):
        """Return the label array for this iteration, in the original image shape."""
        raise NotImplementedError

    def on_end_session(self, state) -> None:
        """Optional cleanup."""


class AdapterServer:
    def __init__(self, hooks: AdapterHooks, host: str = "127.0.0.1", port: int = 0,
                 workspace=None):
        self.hooks = hooks
        self.workspace = Path(workspace) if workspace else Path(tempfile.mkdtemp(prefix="adapter-"))
        self.workspace.mkdir(parents=True, exist_ok=True)
        self._listener = socket.create_server((host, port), backlog=8)
        self._listener.settimeout(0.2)
        self.host, self.port = self._listener.getsockname()[:2]
        self._stop = threading.Event()

    @property
    def endpoint(self) -> str:
        return f"{self.host}:{self.port}"

    def stop(self) -> None:
        self._stop.set()

    def serve_forever(self) -> None:
        try:
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
        finally:
            self._listener.close()

    def _serve_connection(self, conn: socket.socket) -> None:
        f = conn.makefile("rw", encoding="utf-8", newline="\n")

        def send(msg):
            f.write(json.dumps(msg, separators=(",", ":")) + "\n")
            f.flush()

        session = None  # (session_id, state, spacing)
        while not self._stop.is_set():
            try:
                line = f.readline()
            except OSError:
                return
            if not line:
                return
            try:
                msg = json.loads(line)
                mtype = msg.get("type")
            except (json.JSONDecodeError, AttributeError):
                self._safe(send, {"type": "error", "code": "bad_message",
                                  "message": "unparseable message"})
                continue
            try:
                if mtype == "hello":
                    if msg.get("version") != PROTOCOL_VERSION:
                        send({"type": "error", "code": "version_mismatch",
                              "message": f"adapter speaks version {PROTOCOL_VERSION}"})
                        continue
                    send({"type": "hello_ack", "version": PROTOCOL_VERSION,
                          "fingerprint": self.hooks.fingerprint})
                elif mtype == "start_session":
                    session_id = msg.get("session_id")
                    paths = msg.get("image_paths") or []
                    if not session_id or not paths:
                        send({"type": "error", "code": "bad_request",
                              "message": "start_session needs session_id and image_paths"})
                        continue
                    _, spacing = nifti.read_geometry(paths[0])
                    state = self.hooks.on_start_session(msg.get("task_text", ""), paths)
                    session = (session_id, state, spacing)
                elif mtype == "segment":
                    if session is None or msg.get("session_id") != session[0]:
                        send({"type": "error", "code": "no_session",
                              "message": "segment outside an open session"})
                        continue
                    session_id, state, spacing = session
                    iteration = int(msg.get("iteration", -1))
                    started = time.perf_counter()
                    mask = self.hooks.on_segment(state, iteration,
                                                 msg.get("prompts", []),
                                                 msg.get("prompt_memory", []))
                    elapsed_ms = (time.perf_counter() - started) * 1000.0
                    label_path = self.workspace / f"{session_id}_iter{iteration:03d}.nii.gz"
                    nifti.write_mask(mask, spacing, label_path)
                    send({"type": "segmented", "session_id": session_id,
                          "iteration": iteration, "label_path": str(label_path),
                          "inference_ms": elapsed_ms})
                elif mtype == "end_session":
                    if session is not None:
                        self.hooks.on_end_session(session[1])
                        session = None
                elif mtype == "shutdown":
                    self._stop.set()
                    return
                else:
                    send({"type": "error", "code": "bad_message",
                          "message": f"unknown message type {mtype!r}"})
            except OSError:
                return
            except Exception as e:  # hook failures answer, never crash the server
                self._safe(send, {"type": "error", "code": "hook_error",
                                  "message": f"{type(e).__name__}: {e}"})

    @staticmethod
    def _safe(send, msg) -> None:
        try:
            send(msg)
        except OSError:
            pass


def serve_adapter(hooks: AdapterHooks, host: str = "127.0.0.1", port: int = 0,
                  workspace=None, announce=None) -> None:
    """Serve the hooks until a shutdown message arrives."""
    server = AdapterServer(hooks, host, port, workspace)
    if announce is not None:
        announce(server)
    server.serve_forever()
