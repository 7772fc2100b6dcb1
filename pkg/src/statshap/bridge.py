"""Child-process bridge for external black-box models.

Protocol: newline-delimited JSON over the child's standard input/output,
UTF-8, one object per line. Requests are {"op": "info"} and
{"op": "predict", "x": [[...], ...]}; responses are
{"name": ..., "n_features": M} and {"y": [...]}; a server-side failure is
{"error": "..."}. One request is outstanding at a time per handle and
responses are consumed strictly in order; there are no retries, so a
misbehaving server surfaces as an error instead of a silent re-ask.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from typing import Sequence

import numpy as np

from .core import ModelError, ValidationError

__all__ = [
    "BridgeError",
    "BridgeSpawnError",
    "BridgeTimeoutError",
    "BridgeProtocolError",
    "BridgeResponseLengthError",
    "BridgeNonFiniteError",
    "BridgeClosedError",
    "ExternalModel",
    "connect",
    "predict_batch",
]


class BridgeError(ModelError):
    """Base class for external-model transport failures."""


class BridgeSpawnError(BridgeError):
    """The server command could not be launched."""


class BridgeTimeoutError(BridgeError):
    """The server did not answer within the request timeout."""


class BridgeProtocolError(BridgeError):
    """The server sent something that is not a valid protocol message."""


class BridgeResponseLengthError(BridgeError):
    """A predict response carried the wrong number of outputs."""


class BridgeNonFiniteError(BridgeError):
    """A predict response carried NaN or infinite outputs."""


class BridgeClosedError(BridgeError):
    """The server closed its streams mid-conversation."""


class ExternalModel:
    """A protocol-conformant child process exposed as a predictive model.

    A handle is confined to one caller at a time; open several handles for
    parallelism across separate child processes.
    """

    def __init__(self, command: Sequence[str], proc: subprocess.Popen, timeout_ms: int):
        self._command = list(command)
        self._proc = proc
        self._timeout_s = timeout_ms / 1000.0
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._closed = False
        self.name: str = ""
        self.info: dict = {}
        self._n_features: int = 0
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)  # EOF sentinel

    def _read_line(self) -> str:
        try:
            line = self._lines.get(timeout=self._timeout_s)
        except queue.Empty:
            self.close()
            raise BridgeTimeoutError(
                f"server {self._command} gave no response within {self._timeout_s * 1000:.0f} ms"
            ) from None
        if line is None:
            self.close()
            raise BridgeClosedError(f"server {self._command} closed its output stream")
        return line.decode("utf-8") if isinstance(line, bytes) else line

    def _send(self, obj: dict) -> None:
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            self.close()
            raise BridgeClosedError(f"server {self._command} closed its input stream: {exc}") from exc

    def _request(self, obj: dict) -> dict:
        if self._closed:
            raise BridgeClosedError("handle is closed")
        with self._lock:
            self._send(obj)
            line = self._read_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            self.close()
            raise BridgeProtocolError(
                f"server sent invalid JSON: {line.rstrip()!r}"
            ) from exc
        if not isinstance(msg, dict):
            raise BridgeProtocolError(f"server sent a non-object message: {line.rstrip()!r}")
        if "error" in msg:
            raise BridgeProtocolError(f"server reported an error: {msg['error']}")
        return msg

    def handshake(self) -> None:
        msg = self._request({"op": "info"})
        name = msg.get("name")
        n = msg.get("n_features")
        if not isinstance(name, str) or not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise BridgeProtocolError(f"malformed info response: {msg!r}")
        self.name = name
        self._n_features = n
        self.info = msg

    # PredictiveModel surface -------------------------------------------------

    def predict(self, X) -> np.ndarray:
        return predict_batch(self, X)

    def n_features(self) -> int:
        return self._n_features

    # lifecycle ---------------------------------------------------------------

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        proc = self._proc
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self) -> "ExternalModel":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def connect(command: Sequence[str] | str, timeout_ms: int = 10000) -> ExternalModel:
    """Launch a protocol server and complete the info handshake."""
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    if not argv:
        raise ValidationError("empty server command")
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
    except OSError as exc:
        raise BridgeSpawnError(f"could not launch {argv}: {exc}") from exc
    handle = ExternalModel(argv, proc, timeout_ms)
    try:
        handle.handshake()
    except BridgeError:
        handle.close()
        raise
    return handle


def predict_batch(handle: ExternalModel, batch) -> np.ndarray:
    """One predict request for the whole batch; outputs arrive in row order.

    An empty batch returns an empty result without touching the server.
    """
    X = np.asarray(batch, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"batch must be 2-d, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.empty(0)
    if X.shape[1] != handle.n_features():
        raise ValidationError(
            f"batch has {X.shape[1]} features, server declared {handle.n_features()}"
        )
    msg = handle._request({"op": "predict", "x": X.tolist()})
    y = msg.get("y")
    if not isinstance(y, list):
        raise BridgeProtocolError(f"malformed predict response: {msg!r}")
    if len(y) != X.shape[0]:
        raise BridgeResponseLengthError(
            f"asked for {X.shape[0]} predictions, server returned {len(y)}"
        )
    out = np.asarray(y, dtype=float)
    if not np.isfinite(out).all():
        raise BridgeNonFiniteError("server returned non-finite predictions")
    return out
