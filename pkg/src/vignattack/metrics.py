"""Perceptual quality metrics and the radial gain correction baseline.

PSNR assumes a [0, 1] dynamic range. SSIM follows the standard
luminance/contrast/structure product with C1 = 0.01^2 and C2 = 0.03^2,
computed over every 8x8 sliding window (uniform weighting, stride 1)
and averaged across windows and channels.

``radial_correction`` is the defender-side baseline: estimate a
radially symmetric gain from ring statistics, assuming brightness is
on average constant across rings in an unvignetted photo, then divide
it out. The fitted model is g(R) = 1 + c1 R^2 + c2 R^4, a standard
even-polynomial falloff profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .fields import build_coord_grid, check_image

__all__ = [
    "PSNR_CAP",
    "QualityMetrics",
    "CorrectionResult",
    "psnr",
    "ssim",
    "mean_abs_delta",
    "measure_quality",
    "radial_correction",
]

# Finite stand-in for infinite PSNR in flat report files.
PSNR_CAP = 99.0

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class QualityMetrics:
    psnr: float
    ssim: float
    mean_abs_delta: float

    def as_dict(self) -> dict[str, float]:
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "mean_abs_delta": self.mean_abs_delta,
        }


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = check_image(a)
    b = check_image(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    reference, test = _check_pair(reference, test)
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(reference: np.ndarray, test: np.ndarray, window: int = 8) -> float:
    """Mean structural similarity over all sliding ``window`` squares."""
    reference, test = _check_pair(reference, test)
    h, w, _ = reference.shape
    if min(h, w) < window:
        raise ValueError(
            f"image {h}x{w} is smaller than the {window}x{window} SSIM window"
        )
    channel_means = []
    for c in range(reference.shape[2]):
        x = sliding_window_view(reference[:, :, c], (window, window))
        y = sliding_window_view(test[:, :, c], (window, window))
        mx = x.mean(axis=(-2, -1))
        my = y.mean(axis=(-2, -1))
        vx = (x * x).mean(axis=(-2, -1)) - mx * mx
        vy = (y * y).mean(axis=(-2, -1)) - my * my
        cov = (x * y).mean(axis=(-2, -1)) - mx * my
        num = (2.0 * mx * my + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
        den = (mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2)
        channel_means.append(float(np.mean(num / den)))
    return float(np.mean(channel_means))


def mean_abs_delta(reference: np.ndarray, test: np.ndarray) -> float:
    reference, test = _check_pair(reference, test)
    return float(np.mean(np.abs(reference - test)))


def measure_quality(reference: np.ndarray, test: np.ndarray) -> QualityMetrics:
    """PSNR, SSIM, and mean absolute delta in one pass.

    SSIM is reported as nan when the image is smaller than its window.
    """
    reference, test = _check_pair(reference, test)
    if min(reference.shape[0], reference.shape[1]) >= 8:
        s = ssim(reference, test)
    else:
        s = math.nan
    return QualityMetrics(
        psnr=psnr(reference, test),
        ssim=s,
        mean_abs_delta=mean_abs_delta(reference, test),
    )


@dataclass(frozen=True)
class CorrectionResult:
    image: np.ndarray
    c1: float
    c2: float
    degenerate: bool


def radial_correction(image: np.ndarray, rings: int = 8) -> CorrectionResult:
    """Estimate and divide out a radially symmetric gain profile.

    Pixels are grouped into ``rings`` equal-width radius bands. Each
    band's mean intensity relative to the innermost band gives one
    sample of the gain curve; a linear least-squares fit of
    g(R) - 1 = c1 R^2 + c2 R^4 to those samples yields the profile.
    The corrected image is clip(image / g, 0, 1).

    When the fit is not well posed (fewer than three populated rings,
    an empty or black innermost ring, or a rank-deficient system) the
    input is returned unchanged with ``degenerate`` set.
    """
    image = check_image(image)
    if rings < 3:
        raise ValueError(f"need at least 3 rings, got {rings}")
    grid = build_coord_grid(image.shape[0], image.shape[1])
    ring_idx = np.minimum((grid.r * rings).astype(np.int64), rings - 1)
    intensity = image.mean(axis=2)

    radii = []
    gains = []
    inner_mean = None
    for k in range(rings):
        mask = ring_idx == k
        if not mask.any():
            continue
        m = float(intensity[mask].mean())
        if inner_mean is None:
            if k != 0 or m <= 1e-6:
                # No usable reference band at the center.
                return CorrectionResult(image=image, c1=0.0, c2=0.0, degenerate=True)
            inner_mean = m
        radii.append(float(grid.r[mask].mean()))
        gains.append(m / inner_mean)

    if len(radii) < 3:
        return CorrectionResult(image=image, c1=0.0, c2=0.0, degenerate=True)

    r = np.asarray(radii)
    design = np.stack([r ** 2, r ** 4], axis=1)
    target = np.asarray(gains) - 1.0
    coeffs, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 2:
        return CorrectionResult(image=image, c1=0.0, c2=0.0, degenerate=True)
    c1, c2 = float(coeffs[0]), float(coeffs[1])

    gain = 1.0 + c1 * grid.r ** 2 + c2 * grid.r ** 4
    # Cap the correction at 20x so a wild fit cannot blow the image out.
    gain = np.maximum(gain, 0.05)
    corrected = np.clip(image / gain[:, :, None], 0.0, 1.0)
    return CorrectionResult(image=corrected, c1=c1, c2=c2, degenerate=False)
