"""Gradient oracle backed by a torchvision classifier.

The oracle answers two queries about a fixed-shape float image in
[0, 1], channel-last:

  loss_grad(image, label) -> (cross-entropy loss, dLoss/dImage)
  predict_scores(image)   -> (argmax label, softmax scores)

Normalization happens inside, so the reported gradient is with respect
to the raw pixels a client sends, not the normalized tensor the network
sees. All model math runs in float64; combined with the symmetric
float32 narrowing at the boundary, an in-process oracle and the same
oracle behind a loopback connection answer bit-identically.
"""

from __future__ import annotations

import threading
import zlib
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from torchvision import models

__all__ = ["CLASSES", "MIN_SIZE", "MODEL_BUILDERS", "TorchOracle"]

MODEL_BUILDERS = {
    "resnet50": models.resnet50,
    "efficientnet_b0": models.efficientnet_b0,
    "densenet121": models.densenet121,
    "mobilenet_v2": models.mobilenet_v2,
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

CLASSES = 1000
# Every supported architecture downsamples by at most 32x before its
# adaptive pooling stage, so anything this size or larger works.
MIN_SIZE = 32


class TorchOracle:
    """Wrap one classifier behind the gradient-oracle interface.

    ``weights`` selects initialization: "auto" tries the pretrained
    checkpoint and falls back to a seeded random init when it cannot be
    fetched, "random" skips the download outright, and any other value
    is read as a state-dict path. The fallback seed is derived from the
    model name, so restarts serve identical weights.

    A lock serializes model access; the oracle reports itself as
    non-reentrant so each client thread opens its own connection.
    """

    reentrant = False

    def __init__(
        self,
        model_name: str,
        weights: str = "auto",
        size: int = 224,
        log: Callable[[str], None] | None = None,
    ):
        if model_name not in MODEL_BUILDERS:
            known = ", ".join(sorted(MODEL_BUILDERS))
            raise ValueError(f"unknown model {model_name!r} (choices: {known})")
        if size < MIN_SIZE:
            raise ValueError(f"size must be >= {MIN_SIZE}, got {size}")
        self.shape = (int(size), int(size), 3)
        self.classes = CLASSES
        self._log = log if log is not None else lambda message: None
        self._lock = threading.Lock()
        self._model = self._build(model_name, weights)
        self._model.double().eval()
        for param in self._model.parameters():
            param.requires_grad_(False)
        self._mean = torch.tensor(IMAGENET_MEAN, dtype=torch.float64).view(3, 1, 1)
        self._std = torch.tensor(IMAGENET_STD, dtype=torch.float64).view(3, 1, 1)

    def _build(self, name: str, weights: str) -> torch.nn.Module:
        builder = MODEL_BUILDERS[name]
        if weights == "auto":
            try:
                enum = models.get_model_weights(name).DEFAULT
                model = builder(weights=enum)
                self._log(f"{name}: loaded pretrained weights ({enum})")
                return model
            except Exception as exc:
                self._log(
                    f"{name}: pretrained weights unavailable ({exc}); "
                    "falling back to a seeded random init"
                )
                weights = "random"
        if weights == "random":
            torch.manual_seed(zlib.crc32(name.encode("ascii")) & 0x7FFFFFFF)
            self._log(f"{name}: using seeded random weights")
            return builder(weights=None)
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
            model = builder(weights=None)
            model.load_state_dict(state)
        except Exception as exc:
            raise ValueError(f"cannot load weights from {weights}: {exc}") from exc
        self._log(f"{name}: loaded weights from {weights}")
        return model

    def state_dict(self) -> dict:
        return self._model.state_dict()

    def _narrow(self, image: np.ndarray) -> np.ndarray:
        arr = np.asarray(image)
        if arr.shape != self.shape:
            raise ValueError(f"oracle expects image shape {self.shape}, got {arr.shape}")
        return np.ascontiguousarray(arr, dtype="<f4").astype(np.float64)

    def _normalized(self, image: torch.Tensor) -> torch.Tensor:
        chw = image.permute(2, 0, 1)
        return ((chw - self._mean) / self._std).unsqueeze(0)

    def predict_scores(self, image: np.ndarray) -> tuple[int, np.ndarray]:
        x = self._narrow(image)
        with self._lock, torch.no_grad():
            logits = self._model(self._normalized(torch.from_numpy(x)))[0]
            scores = torch.softmax(logits, dim=0).numpy().astype(np.float64)
        return int(np.argmax(scores)), scores

    def predict(self, image: np.ndarray) -> int:
        return self.predict_scores(image)[0]

    def loss_grad(self, image: np.ndarray, label: int) -> tuple[float, np.ndarray]:
        label = int(label)
        if not 0 <= label < self.classes:
            raise ValueError(f"label {label} out of range for {self.classes} classes")
        x = self._narrow(image)
        with self._lock:
            leaf = torch.from_numpy(x).requires_grad_(True)
            logits = self._model(self._normalized(leaf))
            loss = F.cross_entropy(logits, torch.tensor([label]))
            loss.backward()
            grad = leaf.grad.detach().numpy()
        narrowed = np.ascontiguousarray(grad, dtype="<f4").astype(np.float64)
        return float(loss.detach()), narrowed

    def close(self) -> None:
        pass

    def __enter__(self) -> "TorchOracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
