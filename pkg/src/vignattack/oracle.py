"""Classifier oracles: the gradient interface the attack optimizes against.

An oracle answers two queries about a fixed-shape image:

  loss_grad(image, label) -> (cross-entropy loss, dLoss/dImage)
  predict(image)          -> argmax class label

Oracles can live in-process (a small reference MLP evaluated with
numpy) or behind a newline-delimited JSON wire protocol over TCP, so a
heavyweight model in another process or on another host can serve the
same interface.

Wire protocol, one JSON object per line:

  server greets first:
    {"op": "hello", "shape": [H, W, C], "classes": K, "reentrant": bool}
  client requests:
    {"id": n, "op": "loss_grad", "label": y, "image": "<b64>"}
    {"id": n, "op": "predict", "image": "<b64>"}
  server replies:
    {"id": n, "loss": <float>, "grad": "<b64>"}
    {"id": n, "label": <int>, "scores": [<K floats>]}
  anything else:
    {"id": n, "error": "unsupported"}

Pixel and gradient payloads are base64 of little-endian float32,
row-major, channel-last. Because the wire narrows data to float32,
the in-process adapters apply the same narrowing on both directions
(image in, gradient out). A local oracle and the same oracle behind a
loopback connection therefore return bit-identical answers, which the
test suite relies on.
"""

from __future__ import annotations

import base64
import binascii
import json
import math
import socket
import socketserver
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import OracleError, OracleTransportError, ProtocolError

__all__ = [
    "Oracle",
    "ReferenceClassifier",
    "InProcessOracle",
    "RemoteOracle",
    "OracleServer",
    "encode_array",
    "decode_array",
    "serve_stream",
    "oracle_factory_from_spec",
]


class Oracle:
    """Interface every classifier oracle implements."""

    shape: tuple[int, int, int]
    classes: int
    reentrant: bool

    def loss_grad(self, image: np.ndarray, label: int) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def predict(self, image: np.ndarray) -> int:
        return self.predict_scores(image)[0]

    def predict_scores(self, image: np.ndarray) -> tuple[int, np.ndarray]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "Oracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Reference classifier: a two-layer ReLU MLP on raw pixels.


@dataclass
class ReferenceClassifier:
    """Tiny fully-connected softmax classifier, all math in float64.

    Weights: w1 (D_in, D_h), b1 (D_h,), w2 (D_h, K), b2 (K,), plus the
    image shape the flat input dimension corresponds to.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    shape: tuple[int, int, int]

    def __post_init__(self) -> None:
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        self.shape = tuple(int(s) for s in self.shape)
        h, w, c = self.shape
        d_in = h * w * c
        if self.w1.shape[0] != d_in:
            raise ValueError(
                f"w1 expects input dim {self.w1.shape[0]}, image shape gives {d_in}"
            )
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape[0] != self.b1.shape[0]:
            raise ValueError("hidden layer dimensions disagree")
        if self.w2.shape[1] != self.b2.shape[0]:
            raise ValueError("output layer dimensions disagree")
        if self.b2.shape[0] < 2:
            raise ValueError(f"need at least 2 classes, got {self.b2.shape[0]}")

    @property
    def classes(self) -> int:
        return self.b2.shape[0]

    def logits(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64).reshape(-1)
        hidden = np.maximum(x @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2

    def predict(self, image: np.ndarray) -> int:
        # np.argmax breaks ties toward the lowest index.
        return int(np.argmax(self.logits(image)))

    def scores(self, image: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(image))

    def loss_and_input_grad(
        self, image: np.ndarray, label: int
    ) -> tuple[float, np.ndarray]:
        """Cross-entropy of the true label and its gradient w.r.t. pixels."""
        if not 0 <= label < self.classes:
            raise ValueError(f"label {label} out of range for {self.classes} classes")
        x = np.asarray(image, dtype=np.float64).reshape(-1)
        pre = x @ self.w1 + self.b1
        hidden = np.maximum(pre, 0.0)
        z = hidden @ self.w2 + self.b2
        z_shift = z - z.max()
        log_norm = math.log(np.sum(np.exp(z_shift)))
        loss = float(log_norm - z_shift[label])
        probs = np.exp(z_shift - log_norm)
        dz = probs.copy()
        dz[label] -= 1.0
        dhidden = (dz @ self.w2.T) * (pre > 0.0)
        dx = dhidden @ self.w1.T
        return loss, dx.reshape(self.shape)

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            w1=self.w1,
            b1=self.b1,
            w2=self.w2,
            b2=self.b2,
            shape=np.asarray(self.shape, dtype=np.int64),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ReferenceClassifier":
        try:
            with np.load(path) as data:
                return cls(
                    w1=data["w1"],
                    b1=data["b1"],
                    w2=data["w2"],
                    b2=data["b2"],
                    shape=tuple(int(s) for s in data["shape"]),
                )
        except (OSError, KeyError, ValueError) as exc:
            raise OracleError(f"{path}: cannot load classifier weights: {exc}") from exc


def _softmax(z: np.ndarray) -> np.ndarray:
    z_shift = z - z.max()
    e = np.exp(z_shift)
    return e / e.sum()


# ---------------------------------------------------------------------------
# Float32 boundary. Both adapters narrow the image on the way in and the
# gradient on the way out, exactly as the wire format would.


def _narrow_image(image: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    arr = np.asarray(image)
    if arr.shape != shape:
        raise ValueError(f"oracle expects image shape {shape}, got {arr.shape}")
    return np.ascontiguousarray(arr, dtype="<f4").astype(np.float64)


class InProcessOracle(Oracle):
    """Serve a :class:`ReferenceClassifier` directly, float32 boundary applied."""

    def __init__(self, classifier: ReferenceClassifier):
        self._clf = classifier
        self.shape = classifier.shape
        self.classes = classifier.classes
        self.reentrant = True

    def loss_grad(self, image: np.ndarray, label: int) -> tuple[float, np.ndarray]:
        x = _narrow_image(image, self.shape)
        loss, grad = self._clf.loss_and_input_grad(x, int(label))
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise OracleError("classifier produced non-finite loss or gradient")
        return loss, grad.astype("<f4").astype(np.float64)

    def predict_scores(self, image: np.ndarray) -> tuple[int, np.ndarray]:
        x = _narrow_image(image, self.shape)
        return self._clf.predict(x), self._clf.scores(x)


# ---------------------------------------------------------------------------
# Wire protocol helpers.


def encode_array(arr: np.ndarray) -> str:
    """Base64 of the array as little-endian float32, row-major."""
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return base64.b64encode(data).decode("ascii")


def decode_array(text: str, count: int) -> np.ndarray:
    """Inverse of :func:`encode_array`, validated to hold ``count`` floats."""
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad base64 payload: {exc}") from exc
    if len(raw) != 4 * count:
        raise ProtocolError(
            f"payload holds {len(raw) // 4} float32 values, expected {count}"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def _send_line(wfile, obj: dict) -> None:
    wfile.write((json.dumps(obj, separators=(",", ":")) + "\n").encode("ascii"))
    wfile.flush()


class RemoteOracle(Oracle):
    """Client side of the wire protocol over a TCP connection."""

    def __init__(self, host: str, port: int, timeout: float = 60.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise OracleTransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._rfile = self._sock.makefile("rb")
        self._wfile = self._sock.makefile("wb")
        self._next_id = 0
        self._lock = threading.Lock()
        hello = self._read_message()
        if hello.get("op") != "hello":
            raise ProtocolError(f"expected hello, got {hello!r}")
        try:
            shape = tuple(int(s) for s in hello["shape"])
            classes = int(hello["classes"])
            reentrant = bool(hello["reentrant"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed hello: {hello!r}") from exc
        if len(shape) != 3 or any(s < 1 for s in shape) or shape[2] not in (1, 3):
            raise ProtocolError(f"hello carries bad shape {shape}")
        if classes < 2:
            raise ProtocolError(f"hello carries bad class count {classes}")
        self.shape = shape
        self.classes = classes
        self.reentrant = reentrant

    def _read_message(self) -> dict:
        try:
            line = self._rfile.readline()
        except OSError as exc:
            raise OracleTransportError(f"oracle connection lost: {exc}") from exc
        if not line:
            raise OracleTransportError("oracle closed the connection")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"oracle sent invalid JSON: {exc}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError(f"oracle sent a non-object message: {msg!r}")
        return msg

    def _roundtrip(self, request: dict) -> dict:
        with self._lock:
            self._next_id += 1
            request["id"] = self._next_id
            try:
                _send_line(self._wfile, request)
            except OSError as exc:
                raise OracleTransportError(f"oracle connection lost: {exc}") from exc
            reply = self._read_message()
        if reply.get("id") != request["id"]:
            raise ProtocolError(
                f"reply id {reply.get('id')!r} does not match request {request['id']}"
            )
        if "error" in reply:
            raise OracleError(f"oracle error: {reply['error']}")
        return reply

    def loss_grad(self, image: np.ndarray, label: int) -> tuple[float, np.ndarray]:
        arr = np.asarray(image)
        if arr.shape != self.shape:
            raise ValueError(f"oracle expects image shape {self.shape}, got {arr.shape}")
        reply = self._roundtrip(
            {"op": "loss_grad", "label": int(label), "image": encode_array(arr)}
        )
        try:
            loss = float(reply["loss"])
            grad_text = reply["grad"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed loss_grad reply: {reply!r}") from exc
        grad = decode_array(grad_text, int(np.prod(self.shape))).reshape(self.shape)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise OracleError("oracle returned non-finite loss or gradient")
        return loss, grad

    def predict_scores(self, image: np.ndarray) -> tuple[int, np.ndarray]:
        arr = np.asarray(image)
        if arr.shape != self.shape:
            raise ValueError(f"oracle expects image shape {self.shape}, got {arr.shape}")
        reply = self._roundtrip({"op": "predict", "image": encode_array(arr)})
        try:
            label = int(reply["label"])
            scores = np.asarray(reply["scores"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed predict reply: {reply!r}") from exc
        if not 0 <= label < self.classes:
            raise ProtocolError(f"predicted label {label} out of range")
        if scores.shape != (self.classes,):
            raise ProtocolError(
                f"scores length {scores.shape} does not match {self.classes} classes"
            )
        return label, scores

    def close(self) -> None:
        for obj in (self._rfile, self._wfile, self._sock):
            try:
                obj.close()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# Server side.


def serve_stream(oracle: Oracle, rfile, wfile) -> None:
    """Answer protocol requests on a byte stream until it closes."""
    h, w, c = oracle.shape
    pixel_count = h * w * c
    _send_line(
        wfile,
        {
            "op": "hello",
            "shape": [h, w, c],
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
            _send_line(wfile, {"id": None, "error": "bad request: invalid JSON"})
            continue
        msg_id = msg.get("id")
        op = msg.get("op")
        try:
            if op == "loss_grad":
                image = decode_array(str(msg["image"]), pixel_count).reshape(
                    oracle.shape
                )
                label = int(msg["label"])
                if not 0 <= label < oracle.classes:
                    raise ProtocolError(f"label {label} out of range")
                loss, grad = oracle.loss_grad(image, label)
                if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                    raise OracleError("non-finite loss or gradient")
                _send_line(
                    wfile, {"id": msg_id, "loss": loss, "grad": encode_array(grad)}
                )
            elif op == "predict":
                image = decode_array(str(msg["image"]), pixel_count).reshape(
                    oracle.shape
                )
                label, scores = oracle.predict_scores(image)
                _send_line(
                    wfile,
                    {
                        "id": msg_id,
                        "label": int(label),
                        "scores": [float(s) for s in scores],
                    },
                )
            else:
                _send_line(wfile, {"id": msg_id, "error": "unsupported"})
        except (KeyError, TypeError, ValueError, OracleError) as exc:
            _send_line(wfile, {"id": msg_id, "error": f"bad request: {exc}"})


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        try:
            serve_stream(self.server.oracle, self.rfile, self.wfile)
        except OSError:
            pass


class OracleServer:
    """Small threaded TCP server exposing an oracle on host:port."""

    def __init__(self, oracle: Oracle, host: str = "127.0.0.1", port: int = 0):
        if not oracle.reentrant:
            # One connection at a time keeps a stateful oracle safe.
            srv_cls = socketserver.TCPServer
        else:
            srv_cls = socketserver.ThreadingTCPServer
        srv_cls.allow_reuse_address = True
        self._server = srv_cls((host, port), _Handler)
        self._server.oracle = oracle
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "OracleServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def __enter__(self) -> "OracleServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# ---------------------------------------------------------------------------
# Oracle specs used by configs and the CLI.


def oracle_factory_from_spec(spec: str) -> Callable[[], Oracle]:
    """Turn an oracle spec string into a zero-argument constructor.

    Specs:
      builtin:<weights.npz>   in-process reference classifier
      remote:<host>:<port>    wire-protocol client
      toy                     the packaged toy-suite classifier
    """
    from .errors import ConfigError

    spec = spec.strip()
    if spec == "toy":
        from .toydata import packaged_weights_path

        path = packaged_weights_path()
        clf = ReferenceClassifier.load(path)
        return lambda: InProcessOracle(clf)
    if spec.startswith("builtin:"):
        path = spec[len("builtin:") :]
        if not path:
            raise ConfigError("builtin: oracle spec needs a weights path")
        clf = ReferenceClassifier.load(path)
        return lambda: InProcessOracle(clf)
    if spec.startswith("remote:"):
        rest = spec[len("remote:") :]
        host, sep, port_text = rest.rpartition(":")
        if not sep or not host:
            raise ConfigError(f"remote: oracle spec needs host:port, got {rest!r}")
        try:
            port = int(port_text)
        except ValueError as exc:
            raise ConfigError(f"bad port in oracle spec: {port_text!r}") from exc
        return lambda: RemoteOracle(host, port)
    raise ConfigError(f"unknown oracle spec {spec!r}")
