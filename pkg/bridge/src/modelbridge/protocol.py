"""Newline-delimited JSON wire protocol for gradient oracles.

One JSON object per line, UTF-8, '\\n' terminated. The server speaks
first:

    {"op": "hello", "shape": [H, W, C], "classes": K, "reentrant": bool}

then answers each request with exactly one reply echoing its "id":

    {"id": n, "op": "loss_grad", "label": y, "image": "<b64>"}
      -> {"id": n, "loss": <float>, "grad": "<b64>"}
    {"id": n, "op": "predict", "image": "<b64>"}
      -> {"id": n, "label": <int>, "scores": [<K floats>]}

Array payloads are base64 of little-endian float32, row-major,
channel-last. Bad requests earn {"id": ..., "error": "..."} (with a
null id when the line was not valid JSON) and the connection stays
open; only EOF or a transport failure ends the session.
"""

from __future__ import annotations

import base64
import binascii
import json
import math
import socketserver
import threading

import numpy as np

__all__ = ["BridgeServer", "decode_floats", "encode_floats", "serve_connection"]


def encode_floats(arr: np.ndarray) -> str:
    """Base64 of the array as little-endian float32, row-major."""
    return base64.b64encode(
        np.ascontiguousarray(arr, dtype="<f4").tobytes()
    ).decode("ascii")


def decode_floats(text: str, count: int) -> np.ndarray:
    """Inverse of :func:`encode_floats`, validated to hold ``count`` values."""
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, TypeError, ValueError) as exc:
        raise ValueError(f"bad base64 payload: {exc}") from exc
    if len(raw) != 4 * count:
        raise ValueError(
            f"payload holds {len(raw) // 4} float32 values, expected {count}"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def _send(wfile, obj: dict) -> None:
    wfile.write((json.dumps(obj, separators=(",", ":")) + "\n").encode("ascii"))
    wfile.flush()


def serve_connection(oracle, rfile, wfile) -> None:
    """Answer requests on one byte stream until the peer hangs up."""
    height, width, channels = oracle.shape
    pixel_count = height * width * channels
    _send(
        wfile,
        {
            "op": "hello",
            "shape": [height, width, channels],
            "classes": oracle.classes,
            "reentrant": bool(oracle.reentrant),
        },
    )
    while True:
        line = rfile.readline()
        if not line:
            return
        if not line.strip():
            continue
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("not an object")
        except ValueError:
            _send(wfile, {"id": None, "error": "bad request: invalid JSON"})
            continue
        msg_id = msg.get("id")
        op = msg.get("op")
        try:
            if op == "loss_grad":
                image = decode_floats(str(msg["image"]), pixel_count).reshape(
                    oracle.shape
                )
                label = int(msg["label"])
                if not 0 <= label < oracle.classes:
                    raise ValueError(f"label {label} out of range")
                loss, grad = oracle.loss_grad(image, label)
                if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                    raise ValueError("non-finite loss or gradient")
                _send(wfile, {"id": msg_id, "loss": loss, "grad": encode_floats(grad)})
            elif op == "predict":
                image = decode_floats(str(msg["image"]), pixel_count).reshape(
                    oracle.shape
                )
                label, scores = oracle.predict_scores(image)
                _send(
                    wfile,
                    {
                        "id": msg_id,
                        "label": int(label),
                        "scores": [float(s) for s in scores],
                    },
                )
            else:
                _send(wfile, {"id": msg_id, "error": "unsupported"})
        except (KeyError, TypeError, ValueError) as exc:
            _send(wfile, {"id": msg_id, "error": f"bad request: {exc}"})


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        try:
            serve_connection(self.server.oracle, self.rfile, self.wfile)
        except OSError:
            pass


class BridgeServer:
    """Threaded TCP server exposing one oracle on host:port.

    Connections are handled concurrently; the oracle's own lock
    serializes model access underneath.
    """

    def __init__(self, oracle, host: str = "127.0.0.1", port: int = 0):
        socketserver.ThreadingTCPServer.allow_reuse_address = True
        self._server = socketserver.ThreadingTCPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self._server.oracle = oracle
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def start(self) -> "BridgeServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def __enter__(self) -> "BridgeServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
