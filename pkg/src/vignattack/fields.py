"""Physical vignetting model and its analytic parameter gradients.

The brightness falloff applied to an image is a per-pixel gain field

    V = A * G * T

built from three physically motivated factors on a normalized image
plane:

  A  off-axis illumination, ``1 / (1 + (R * f_inv)^2)^2`` where R is
     the distance from the optical center and f_inv the reciprocal of
     the effective focal length,
  G  geometric falloff, initialized to the linear profile ``1 - alpha * R``
     (an optimizer may later treat G as a free field),
  T  sensor tilt, ``cos(tau) * (1 + tan(tau) * f_inv * w^2)`` with
     ``w = u * sin(chi) - v * cos(chi)``; tau is the tilt angle and chi
     the tilt axis orientation.

Pixel coordinates (u, v) are taken at pixel centers, origin at the
image center, and scaled so the farthest pixel center sits at distance
R = 1. The vignetted image is ``clamp(I * V, 0, 1)`` with one shared
field across channels.

Everything here is float64. Gradient routines return exact derivatives
of the clamped composite, with upstream gradient zeroed wherever the
raw product left [0, 1] (the clamp is flat there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CoordGrid",
    "PhysicalParams",
    "VignetteFields",
    "ParamGrads",
    "build_coord_grid",
    "illumination_field",
    "geometry_field_init",
    "tilt_field",
    "compose_fields",
    "apply_vignette",
    "vignette_gradients",
]


@dataclass(frozen=True)
class CoordGrid:
    """Normalized pixel-center coordinates for an H x W image."""

    u: np.ndarray  # (H, W) horizontal offset from center, corner-normalized
    v: np.ndarray  # (H, W) vertical offset
    r: np.ndarray  # (H, W) radius, sqrt(u^2 + v^2), max 1.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape


@dataclass
class PhysicalParams:
    """The four scalar knobs of the vignetting model."""

    f_inv: float = 1.0
    alpha: float = 0.0
    tau: float = 0.0
    chi: float = 0.0

    def validate(self) -> None:
        for name in ("f_inv", "alpha", "tau", "chi"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"parameter {name} must be finite, got {value!r}")
        if self.f_inv < 0.0:
            raise ValueError(f"f_inv must be >= 0, got {self.f_inv}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not abs(self.tau) < math.pi / 2:
            raise ValueError(f"|tau| must be < pi/2, got {self.tau}")

    def as_dict(self) -> dict[str, float]:
        return {
            "f_inv": float(self.f_inv),
            "alpha": float(self.alpha),
            "tau": float(self.tau),
            "chi": float(self.chi),
        }


@dataclass(frozen=True)
class VignetteFields:
    """The three factor fields and their composite, all (H, W) float64."""

    a: np.ndarray
    g: np.ndarray
    t: np.ndarray
    v: np.ndarray


@dataclass
class ParamGrads:
    """Scalar objective gradients with respect to the physical parameters."""

    f_inv: float = 0.0
    alpha: float = 0.0
    tau: float = 0.0
    chi: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {
            "f_inv": float(self.f_inv),
            "alpha": float(self.alpha),
            "tau": float(self.tau),
            "chi": float(self.chi),
        }


def build_coord_grid(height: int, width: int) -> CoordGrid:
    """Normalized center-origin coordinates for an image of the given size.

    Pixel (i, j) gets the coordinates of its center, ((j + 0.5) - W/2,
    (i + 0.5) - H/2), divided by the distance from the image center to
    the farthest pixel center. That makes max R exactly 1.0 regardless
    of resolution or aspect ratio. A 1x1 image (zero corner distance)
    keeps its single pixel at R = 0.
    """
    if height < 1 or width < 1:
        raise ValueError(f"image size must be positive, got {height}x{width}")
    ys = (np.arange(height, dtype=np.float64) + 0.5) - height / 2.0
    xs = (np.arange(width, dtype=np.float64) + 0.5) - width / 2.0
    scale = math.sqrt(((height - 1) / 2.0) ** 2 + ((width - 1) / 2.0) ** 2)
    if scale == 0.0:
        scale = 1.0
    v, u = np.meshgrid(ys / scale, xs / scale, indexing="ij")
    r = np.sqrt(u * u + v * v)
    return CoordGrid(u=u, v=v, r=r)


def illumination_field(grid: CoordGrid, f_inv: float) -> np.ndarray:
    """Off-axis illumination falloff, 1 / (1 + (R * f_inv)^2)^2."""
    if not (math.isfinite(f_inv) and f_inv >= 0.0):
        raise ValueError(f"f_inv must be finite and >= 0, got {f_inv!r}")
    q = 1.0 + (grid.r * f_inv) ** 2
    return 1.0 / (q * q)


def geometry_field_init(grid: CoordGrid, alpha: float) -> np.ndarray:
    """Linear geometric falloff profile G0 = 1 - alpha * R."""
    if not (math.isfinite(alpha) and 0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha!r}")
    return 1.0 - alpha * grid.r


def tilt_field(grid: CoordGrid, f_inv: float, tau: float, chi: float) -> np.ndarray:
    """Sensor tilt factor cos(tau) + sin(tau) * f_inv * w^2.

    w = u * sin(chi) - v * cos(chi) is the signed distance from the
    tilt axis. The expanded form above equals
    cos(tau) * (1 + tan(tau) * f_inv * w^2) and stays defined for all
    |tau| < pi/2.
    """
    if not (math.isfinite(tau) and abs(tau) < math.pi / 2):
        raise ValueError(f"|tau| must be < pi/2, got {tau!r}")
    if not math.isfinite(chi):
        raise ValueError(f"chi must be finite, got {chi!r}")
    w = grid.u * math.sin(chi) - grid.v * math.cos(chi)
    return math.cos(tau) + math.sin(tau) * f_inv * (w * w)


def compose_fields(
    grid: CoordGrid,
    params: PhysicalParams,
    g: np.ndarray | None = None,
) -> VignetteFields:
    """Evaluate A, G, T and their product at the given parameters.

    When ``g`` is supplied it is used verbatim as the geometric factor
    (the free-field optimizer path); otherwise G is the linear profile
    G0(alpha).
    """
    params.validate()
    a = illumination_field(grid, params.f_inv)
    if g is None:
        g = geometry_field_init(grid, params.alpha)
    else:
        g = _check_field(g, grid.shape, "g")
    t = tilt_field(grid, params.f_inv, params.tau, params.chi)
    return VignetteFields(a=a, g=g, t=t, v=a * g * t)


def apply_vignette(
    image: np.ndarray,
    params: PhysicalParams,
    g: np.ndarray | None = None,
) -> np.ndarray:
    """Render the vignetted image clamp(I * V, 0, 1).

    ``image`` is (H, W, C) float in [0, 1] with C of 1 or 3. The same
    gain field multiplies every channel.
    """
    image = check_image(image)
    grid = build_coord_grid(image.shape[0], image.shape[1])
    fields = compose_fields(grid, params, g=g)
    return np.clip(image * fields.v[:, :, None], 0.0, 1.0)


def vignette_gradients(
    image: np.ndarray,
    loss_grad: np.ndarray,
    params: PhysicalParams,
    g: np.ndarray,
) -> tuple[ParamGrads, np.ndarray]:
    """Backpropagate an upstream image-space gradient to the parameters.

    ``loss_grad`` holds dJ/d(output) for the clamped render
    clamp(I * V, 0, 1) evaluated with geometric factor ``g``. Returns
    the scalar gradients for (f_inv, alpha, tau, chi) plus the
    per-pixel gradient dJ/dG. The alpha entry follows the chain through
    G0, i.e. sum(dJ/dG * (-R)); with g = G0(alpha) that is the exact
    alpha derivative.

    Pixels where the raw product I * V landed outside [0, 1] sit on the
    flat part of the clamp and contribute nothing.
    """
    image = check_image(image)
    if loss_grad.shape != image.shape:
        raise ValueError(
            f"loss_grad shape {loss_grad.shape} does not match image {image.shape}"
        )
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if not np.all(np.isfinite(loss_grad)):
        raise ValueError("loss_grad contains non-finite values")
    grid = build_coord_grid(image.shape[0], image.shape[1])
    fields = compose_fields(grid, params, g=_check_field(g, grid.shape, "g"))
    return _gradients_from_fields(image, loss_grad, params, grid, fields)


def _gradients_from_fields(
    image: np.ndarray,
    loss_grad: np.ndarray,
    params: PhysicalParams,
    grid: CoordGrid,
    fields: VignetteFields,
) -> tuple[ParamGrads, np.ndarray]:
    """Core gradient math on precomputed fields (no validation)."""
    raw = image * fields.v[:, :, None]
    passthrough = (raw >= 0.0) & (raw <= 1.0)
    # dJ/dV at each pixel: channels share one gain value.
    dj_dv = np.sum(loss_grad * passthrough * image, axis=2)

    grad_g = dj_dv * fields.a * fields.t

    sin_chi = math.sin(params.chi)
    cos_chi = math.cos(params.chi)
    sin_tau = math.sin(params.tau)
    cos_tau = math.cos(params.tau)
    w = grid.u * sin_chi - grid.v * cos_chi
    w2 = w * w

    q = 1.0 + (grid.r * params.f_inv) ** 2
    da_df = -4.0 * params.f_inv * (grid.r * grid.r) / (q * q * q)
    dt_df = sin_tau * w2
    dt_dtau = -sin_tau + cos_tau * params.f_inv * w2
    dt_dchi = 2.0 * sin_tau * params.f_inv * w * (grid.u * cos_chi + grid.v * sin_chi)

    ag = fields.a * fields.g
    grad_f = float(np.sum(dj_dv * (da_df * fields.g * fields.t + ag * dt_df)))
    grad_tau = float(np.sum(dj_dv * ag * dt_dtau))
    grad_chi = float(np.sum(dj_dv * ag * dt_dchi))
    grad_alpha = float(np.sum(grad_g * (-grid.r)))

    grads = ParamGrads(f_inv=grad_f, alpha=grad_alpha, tau=grad_tau, chi=grad_chi)
    return grads, grad_g


def check_image(image: np.ndarray) -> np.ndarray:
    """Validate an (H, W, C) float image in [0, 1], C in {1, 3}."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(
            f"image must be (H, W, C) with C of 1 or 3, got shape {arr.shape}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image has empty spatial dims: {arr.shape}")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"image values must lie in [0, 1], got [{arr.min()}, {arr.max()}]"
        )
    return arr


def _check_field(g: np.ndarray, shape: tuple[int, int], name: str) -> np.ndarray:
    arr = np.asarray(g, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{name} shape {arr.shape} does not match image plane {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
