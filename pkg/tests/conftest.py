"""Shared fixtures: the packaged demo suite and its classifier."""

import sys

import numpy as np
import pytest

from vignattack.evaluate import load_dataset
from vignattack.oracle import InProcessOracle, ReferenceClassifier
from vignattack.toydata import load_packaged_suite, packaged_weights_path


@pytest.fixture(scope="session")
def packaged_classifier() -> ReferenceClassifier:
    return ReferenceClassifier.load(packaged_weights_path())


@pytest.fixture(scope="session")
def packaged_dataset():
    manifest, _ = load_packaged_suite()
    images, labels, names = load_dataset(manifest)
    return images, labels, names


@pytest.fixture()
def packaged_oracle(packaged_classifier) -> InProcessOracle:
    return InProcessOracle(packaged_classifier)


def random_image(rng: np.random.Generator, height: int, width: int, channels: int = 1,
                 lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return rng.uniform(lo, hi, size=(height, width, channels))


def pytest_terminal_summary(terminalreporter):
    """Print one line per acceptance criterion after the run."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "CRITERION_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
