"""Level-set regularizer keeping a free geometric field near its profile.

When the geometric factor G is optimized as a free per-pixel field it
can drift arbitrarily far from the physical linear profile G0. The
regularizer

    Reg(G) = sum((G - G0)^2 * H(G))

penalizes that drift, but only inside the region selected by a smoothed
Heaviside H of G against a level ``z_level``. Pixels whose gain sits
above the level count as "inside" and are pulled back toward G0;
pixels below the level are left alone, which is what lets the
optimizer carve out localized dark structure.

H uses the arctan smoothing

    H(x)  = 0.5 * (1 + (2/pi) * atan((x - z) / eps))
    H'(x) = eps / (pi * (eps^2 + (x - z)^2))

so both the value and its derivative are defined everywhere.

The default level is 0.5, the midpoint of the valid gain range. The
level 1.0 used in the original formulation of this attack is kept as
``Z_LEVEL_ORIGINAL`` for reproduction runs; with gains clamped to
[0, 1] it degenerates (no pixel can sit above it), so it is not the
default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Z_LEVEL_ORIGINAL",
    "LevelSetConfig",
    "smoothed_heaviside",
    "levelset_regularizer",
]

Z_LEVEL_ORIGINAL = 1.0


@dataclass
class LevelSetConfig:
    """Level and smoothing width for the Heaviside window."""

    z_level: float = 0.5
    h_eps: float = 0.05

    def validate(self) -> None:
        if not (math.isfinite(self.z_level)):
            raise ValueError(f"z_level must be finite, got {self.z_level!r}")
        if not (math.isfinite(self.h_eps) and self.h_eps > 0.0):
            raise ValueError(f"h_eps must be > 0, got {self.h_eps!r}")


def smoothed_heaviside(
    x: np.ndarray, z_level: float = 0.5, h_eps: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
    """Arctan-smoothed step at ``z_level`` and its derivative.

    Returns (H(x), H'(x)) elementwise. H crosses 0.5 exactly at the
    level and H(z_level + h_eps) = 0.75.
    """
    if not h_eps > 0.0:
        raise ValueError(f"h_eps must be > 0, got {h_eps!r}")
    x = np.asarray(x, dtype=np.float64)
    shifted = x - z_level
    h = 0.5 * (1.0 + (2.0 / math.pi) * np.arctan(shifted / h_eps))
    h_prime = h_eps / (math.pi * (h_eps * h_eps + shifted * shifted))
    return h, h_prime


def levelset_regularizer(
    g: np.ndarray, g0: np.ndarray, cfg: LevelSetConfig | None = None
) -> tuple[float, np.ndarray]:
    """Value and dReg/dG of sum((G - G0)^2 * H(G)).

    The gradient has a pull term 2 * (G - G0) * H(G) active inside the
    window and a boundary term (G - G0)^2 * H'(G) from the window
    itself moving with G.
    """
    if cfg is None:
        cfg = LevelSetConfig()
    cfg.validate()
    g = np.asarray(g, dtype=np.float64)
    g0 = np.asarray(g0, dtype=np.float64)
    if g.shape != g0.shape:
        raise ValueError(f"g shape {g.shape} does not match g0 {g0.shape}")
    d = g - g0
    h, h_prime = smoothed_heaviside(g, cfg.z_level, cfg.h_eps)
    value = float(np.sum(d * d * h))
    grad_g = 2.0 * d * h + d * d * h_prime
    return value, grad_g
