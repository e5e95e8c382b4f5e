"""Smoothed Heaviside window and the geometry regularizer."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vignattack.levelset import (
    LevelSetConfig,
    Z_LEVEL_ORIGINAL,
    levelset_regularizer,
    smoothed_heaviside,
)


def test_heaviside_hand_values():
    h, _ = smoothed_heaviside(np.array([0.5]), z_level=0.5, h_eps=0.05)
    assert h[0] == 0.5
    h, _ = smoothed_heaviside(np.array([0.55]), z_level=0.5, h_eps=0.05)
    assert_allclose(h[0], 0.75, rtol=0, atol=1e-12)
    h, _ = smoothed_heaviside(np.array([0.45]), z_level=0.5, h_eps=0.05)
    assert_allclose(h[0], 0.25, rtol=0, atol=1e-12)


def test_heaviside_limits_and_monotonicity():
    x = np.linspace(-3.0, 3.0, 301)
    h, h_prime = smoothed_heaviside(x, z_level=0.5, h_eps=0.05)
    assert np.all(np.diff(h) > 0.0)
    assert np.all(h_prime > 0.0)
    assert h[0] < 0.01 and h[-1] > 0.99
    assert 0.0 < h.min() and h.max() < 1.0


def test_heaviside_derivative_matches_finite_differences():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1.0, 2.0, size=64)
    step = 1e-6
    for z, eps in [(0.5, 0.05), (1.0, 0.2), (0.0, 0.01)]:
        _, h_prime = smoothed_heaviside(x, z_level=z, h_eps=eps)
        hi, _ = smoothed_heaviside(x + step, z_level=z, h_eps=eps)
        lo, _ = smoothed_heaviside(x - step, z_level=z, h_eps=eps)
        assert_allclose(h_prime, (hi - lo) / (2 * step), rtol=1e-6, atol=1e-10)


def test_heaviside_rejects_bad_eps():
    with pytest.raises(ValueError):
        smoothed_heaviside(np.zeros(3), h_eps=0.0)
    with pytest.raises(ValueError):
        smoothed_heaviside(np.zeros(3), h_eps=-0.1)


def test_original_threshold_constant():
    # The window default sits below the classic threshold of 1 so that
    # an untouched field (G0 near 1) still feels the pull.
    assert Z_LEVEL_ORIGINAL == 1.0
    assert LevelSetConfig().z_level == 0.5


def test_regularizer_zero_on_anchor():
    g0 = np.linspace(0.4, 1.0, 25).reshape(5, 5)
    value, grad = levelset_regularizer(g0, g0)
    assert value == 0.0
    assert_allclose(grad, np.zeros((5, 5)), rtol=0, atol=0.0)


def test_regularizer_value_is_windowed_square():
    g0 = np.full((3, 3), 0.8)
    g = g0 + 0.1
    value, _ = levelset_regularizer(g, g0)
    h, _ = smoothed_heaviside(np.array([0.9]))
    assert_allclose(value, 9 * 0.1 * 0.1 * h[0], rtol=1e-12)


def test_regularizer_gradient_matches_finite_differences():
    rng = np.random.default_rng(17)
    cfg = LevelSetConfig(z_level=0.5, h_eps=0.05)
    for _ in range(6):
        g0 = rng.uniform(0.3, 1.0, size=(4, 4))
        g = np.clip(g0 + rng.normal(0.0, 0.1, size=(4, 4)), 0.0, 1.0)
        _, grad = levelset_regularizer(g, g0, cfg)
        step = 1e-7
        for _ in range(6):
            i, k = rng.integers(0, 4, size=2)
            hi = g.copy()
            lo = g.copy()
            hi[i, k] += step
            lo[i, k] -= step
            v_hi, _ = levelset_regularizer(hi, g0, cfg)
            v_lo, _ = levelset_regularizer(lo, g0, cfg)
            want = (v_hi - v_lo) / (2 * step)
            assert_allclose(grad[i, k], want, rtol=1e-4, atol=1e-8)


def test_regularizer_shape_mismatch():
    with pytest.raises(ValueError):
        levelset_regularizer(np.zeros((2, 2)), np.zeros((3, 3)))


def test_config_validation():
    LevelSetConfig(z_level=1.0, h_eps=0.2).validate()
    with pytest.raises(ValueError):
        LevelSetConfig(h_eps=0.0).validate()
    with pytest.raises(ValueError):
        LevelSetConfig(z_level=float("nan")).validate()
