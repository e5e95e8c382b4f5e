"""Bundled synthetic dataset and reference classifier for the demo suite.

The suite is built from three 16x16 grayscale pattern families whose ring-mean
profiles are close to flat, so the radial correction baseline leaves clean
images essentially untouched:

* class 0: horizontal sinusoid stripes,
* class 1: vertical sinusoid stripes,
* class 2: an azimuthal "bowtie" (cosine in the polar angle).

Every image carries a faint distractor drawn from another class, which puts a
portion of the evaluation set near the decision boundary. All randomness is
seeded, so a suite is reproducible from its seed alone.
"""

from __future__ import annotations

import dataclasses
import importlib.resources
import pathlib

import numpy as np

from .imio import DatasetManifest, ManifestEntry, load_manifest, quantize, save_image
from .oracle import ReferenceClassifier

TOY_SIZE = 16
TOY_CLASSES = 3
TOY_EVAL_PER_CLASS = 20
TOY_TRAIN_PER_CLASS = 200
TOY_HIDDEN = 32
TOY_TRAIN_ITERS = 250

_ROWS, _COLS = np.mgrid[0:TOY_SIZE, 0:TOY_SIZE].astype(float)
_CENTER = (TOY_SIZE - 1) / 2.0
_THETA = np.arctan2(_ROWS - _CENTER, _COLS - _CENTER)


@dataclasses.dataclass(frozen=True)
class ToySuite:
    """A generated evaluation set plus the classifier trained for it."""

    images: np.ndarray
    labels: np.ndarray
    classifier: ReferenceClassifier

    def clean_accuracy(self) -> float:
        hits = sum(
            1
            for image, label in zip(self.images, self.labels)
            if self.classifier.predict(np.asarray(image, dtype=np.float64)) == int(label)
        )
        return hits / float(self.labels.shape[0])


def _stripes_h(rng: np.random.Generator) -> np.ndarray:
    cycles = rng.uniform(1.8, 3.2)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return (1.0 + np.sin(2.0 * np.pi * cycles * _ROWS / TOY_SIZE + phase)) / 2.0


def _stripes_v(rng: np.random.Generator) -> np.ndarray:
    cycles = rng.uniform(1.8, 3.2)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return (1.0 + np.sin(2.0 * np.pi * cycles * _COLS / TOY_SIZE + phase)) / 2.0


def _bowtie(rng: np.random.Generator) -> np.ndarray:
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return (1.0 + np.cos(2.0 * _THETA + phase)) / 2.0


_PATTERNS = (_stripes_h, _stripes_v, _bowtie)


def _sample_image(label: int, rng: np.random.Generator) -> np.ndarray:
    amp = rng.uniform(0.3, 0.5)
    base = rng.uniform(0.18, 0.32)
    image = base + amp * _PATTERNS[label](rng)
    other = (label + int(rng.integers(1, TOY_CLASSES))) % TOY_CLASSES
    image = image + rng.uniform(0.12, 0.26) * _PATTERNS[other](rng)
    image = image + rng.normal(0.0, 0.045, (TOY_SIZE, TOY_SIZE))
    return quantize(np.clip(image, 0.0, 1.0)[:, :, None])


def generate_toy_images(rng: np.random.Generator, n_per_class: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n_per_class`` images for each class, label-blocked in order."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    images = []
    labels = []
    for label in range(TOY_CLASSES):
        for _ in range(n_per_class):
            images.append(_sample_image(label, rng))
            labels.append(label)
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def train_classifier(
    images: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    hidden: int = TOY_HIDDEN,
    iters: int = TOY_TRAIN_ITERS,
    learning_rate: float = 0.15,
    momentum: float = 0.9,
    weight_decay: float = 1e-3,
) -> ReferenceClassifier:
    """Fit the two-layer network with SGD on softmax cross-entropy.

    Training runs on inputs shifted to [-0.5, 0.5] to keep the hidden layer
    from saturating; the shift is folded into the first-layer bias afterwards
    so the returned classifier consumes raw [0, 1] pixels.
    """
    count = images.shape[0]
    shape = images.shape[1:]
    x = images.reshape(count, -1) - 0.5
    d_in = x.shape[1]
    classes = int(labels.max()) + 1
    w1 = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, classes))
    b2 = np.zeros(classes)
    onehot = np.zeros((count, classes))
    onehot[np.arange(count), labels] = 1.0
    velocity = [np.zeros_like(p) for p in (w1, b1, w2, b2)]
    for _ in range(iters):
        pre = x @ w1 + b1
        hid = np.maximum(pre, 0.0)
        logits = hid @ w2 + b2
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        dlogits = (probs - onehot) / count
        dw2 = hid.T @ dlogits + weight_decay * w2
        db2 = dlogits.sum(axis=0)
        dhid = (dlogits @ w2.T) * (pre > 0.0)
        dw1 = x.T @ dhid + weight_decay * w1
        db1 = dhid.sum(axis=0)
        for param, grad, vel in zip((w1, b1, w2, b2), (dw1, db1, dw2, db2), velocity):
            vel *= momentum
            vel -= learning_rate * grad
            param += vel
    return ReferenceClassifier(
        w1=w1,
        b1=b1 - 0.5 * w1.sum(axis=0),
        w2=w2,
        b2=b2,
        shape=shape,
    )


def build_toy_suite(seed: int = 0) -> ToySuite:
    """Generate the evaluation images and train the matching classifier.

    Separate child streams keep evaluation data, training data, and weight
    initialization independent, so changing one draw count never reshuffles
    the others.
    """
    eval_images, eval_labels = generate_toy_images(
        np.random.default_rng([seed, 0]), TOY_EVAL_PER_CLASS
    )
    train_images, train_labels = generate_toy_images(
        np.random.default_rng([seed, 1]), TOY_TRAIN_PER_CLASS
    )
    classifier = train_classifier(train_images, train_labels, np.random.default_rng([seed, 2]))
    return ToySuite(images=eval_images, labels=eval_labels, classifier=classifier)


def write_toy_suite(directory: pathlib.Path, seed: int = 0) -> ToySuite:
    """Materialize a suite on disk: PNGs, a manifest, and classifier weights."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    suite = build_toy_suite(seed)
    entries = []
    for index, (image, label) in enumerate(zip(suite.images, suite.labels)):
        name = f"{index:03d}_c{int(label)}.png"
        save_image(image, directory / name)
        entries.append(ManifestEntry(path=name, label=int(label)))
    lines = ["path,label"]
    lines.extend(f"{entry.path},{entry.label}" for entry in entries)
    (directory / "manifest.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    suite.classifier.save(directory / "weights.npz")
    return suite


def packaged_toy_dir() -> pathlib.Path:
    """Directory holding the pre-generated suite shipped with the package."""
    path = importlib.resources.files("vignattack") / "assets" / "toy"
    return pathlib.Path(str(path))


def packaged_manifest_path() -> pathlib.Path:
    return packaged_toy_dir() / "manifest.csv"


def packaged_weights_path() -> pathlib.Path:
    return packaged_toy_dir() / "weights.npz"


def load_packaged_suite() -> tuple[DatasetManifest, pathlib.Path]:
    """Manifest of the shipped suite plus the directory it lives in."""
    directory = packaged_toy_dir()
    return load_manifest(directory / "manifest.csv"), directory
