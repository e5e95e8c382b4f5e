"""Adversarial optimization of the vignetting parameters.

Two modes share one loop:

  ri  radial-isotropic: only the four physical scalars move, geometry
      stays glued to the linear profile G0(alpha).
  ra  radial-anisotropic: the geometric factor G additionally becomes a
      free per-pixel field, held near G0 by the level-set regularizer.

The objective being ascended is

  total = loss(oracle, render) - lambda_g * Reg(G)        (ra only)
          - lambda_f * f_inv^2 - lambda_alpha * alpha^2

The penalty terms keep the attack in the subtle corner of parameter
space: a small f_inv means a long focal length (weak off-axis falloff)
and a small alpha means a gentle profile, so the optimizer pays for
conspicuous global darkening. Updates are signed gradient steps with
per-parameter step sizes, projected after every iteration onto box
feasible sets (parameter value within eps of its initial value,
intersected with physical validity).

In ra mode the pair (alpha, G) is anchored: the state tracked across
iterations is the residual field dG = G - G0(alpha), and G is
re-materialized as clip(G0(alpha) + dG, 0, 1) whenever alpha moves.
An alpha step therefore shifts the whole field through the profile it
is anchored to, and alpha's gradient includes the profile path through
the classifier plus the level-set window term. With a zero G step size
the residual stays identically zero and ra collapses to ri exactly,
which is a correctness check the test suite exercises.

A candidate only counts as adversarial if it survives 8-bit
quantization: success is judged on quantize(render), the image a
defender would actually receive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import (
    CoordGrid,
    ParamGrads,
    PhysicalParams,
    _gradients_from_fields,
    build_coord_grid,
    check_image,
    compose_fields,
    geometry_field_init,
)
from .imio import quantize
from .levelset import LevelSetConfig, smoothed_heaviside
from .metrics import QualityMetrics, measure_quality
from .oracle import Oracle

__all__ = [
    "TAU_LIMIT",
    "ParamBall",
    "ParamBounds",
    "StepSizes",
    "AttackConfig",
    "ObjectiveEval",
    "AttackResult",
    "objective",
    "run_attack",
]

# Hard validity edge for the tilt angle; cos(tau) must stay positive.
TAU_LIMIT = math.pi / 2 - 1e-6


@dataclass
class ParamBall:
    """An L-inf ball [init - eps, init + eps] clipped to a validity range."""

    init: float
    eps: float
    valid_lo: float = -math.inf
    valid_hi: float = math.inf

    def validate(self, name: str) -> None:
        if not (math.isfinite(self.init) and math.isfinite(self.eps)):
            raise ValueError(f"{name}: init and eps must be finite")
        if self.eps < 0.0:
            raise ValueError(f"{name}: eps must be >= 0, got {self.eps}")
        lo, hi = self.interval()
        if lo > hi:
            raise ValueError(f"{name}: feasible interval is empty ({lo} > {hi})")
        if not self.valid_lo <= self.init <= self.valid_hi:
            raise ValueError(f"{name}: init {self.init} violates validity range")

    def interval(self) -> tuple[float, float]:
        return (
            max(self.init - self.eps, self.valid_lo),
            min(self.init + self.eps, self.valid_hi),
        )

    def clamp(self, x: float) -> float:
        lo, hi = self.interval()
        return min(max(x, lo), hi)


@dataclass
class ParamBounds:
    """Feasible sets for the four physical parameters."""

    f_inv: ParamBall = field(
        default_factory=lambda: ParamBall(1.0, 0.5, valid_lo=0.0)
    )
    alpha: ParamBall = field(
        default_factory=lambda: ParamBall(0.0, 0.5, valid_lo=0.0, valid_hi=1.0)
    )
    tau: ParamBall = field(
        default_factory=lambda: ParamBall(
            0.0, math.pi / 6, valid_lo=-TAU_LIMIT, valid_hi=TAU_LIMIT
        )
    )
    chi: ParamBall = field(default_factory=lambda: ParamBall(0.0, math.pi / 6))

    def validate(self) -> None:
        self.f_inv.validate("f_inv")
        self.alpha.validate("alpha")
        self.tau.validate("tau")
        self.chi.validate("chi")

    def initial_params(self) -> PhysicalParams:
        return PhysicalParams(
            f_inv=self.f_inv.init,
            alpha=self.alpha.init,
            tau=self.tau.init,
            chi=self.chi.init,
        )

    def project(self, params: PhysicalParams) -> PhysicalParams:
        return PhysicalParams(
            f_inv=self.f_inv.clamp(params.f_inv),
            alpha=self.alpha.clamp(params.alpha),
            tau=self.tau.clamp(params.tau),
            chi=self.chi.clamp(params.chi),
        )

    def contains(self, params: PhysicalParams, tol: float = 0.0) -> bool:
        for name in ("f_inv", "alpha", "tau", "chi"):
            lo, hi = getattr(self, name).interval()
            value = getattr(params, name)
            if not (lo - tol <= value <= hi + tol):
                return False
        return True


@dataclass
class StepSizes:
    """Signed-update step sizes. A zero step freezes that variable."""

    f_inv: float = 0.0125
    alpha: float = 0.0125
    tau: float = 0.01
    chi: float = 0.01
    g: float = 0.0125

    def validate(self) -> None:
        for name in ("f_inv", "alpha", "tau", "chi", "g"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"step {name} must be finite and >= 0, got {value}")


@dataclass
class AttackConfig:
    mode: str = "ra"
    steps: StepSizes = field(default_factory=StepSizes)
    max_iters: int = 40
    lambda_f: float = 1.0
    lambda_alpha: float = 1.0
    lambda_g: float = 1.0
    bounds: ParamBounds = field(default_factory=ParamBounds)
    levelset: LevelSetConfig = field(default_factory=LevelSetConfig)
    early_stop: bool = True

    def validate(self) -> None:
        if self.mode not in ("ri", "ra"):
            raise ValueError(f"mode must be 'ri' or 'ra', got {self.mode!r}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        for name in ("lambda_f", "lambda_alpha", "lambda_g"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        self.steps.validate()
        self.bounds.validate()
        self.levelset.validate()


@dataclass
class ObjectiveEval:
    """One evaluation of the attack objective and its gradients."""

    total: float
    components: dict[str, float]
    grads: ParamGrads
    grad_g: np.ndarray | None
    rendered: np.ndarray


@dataclass
class AttackResult:
    adversarial: np.ndarray
    final_params: PhysicalParams
    final_g: np.ndarray | None
    label: int
    clean_prediction: int
    clean_correct: bool
    prediction: int
    success: bool
    iterations_used: int
    loss_trace: list[float]
    quality: QualityMetrics

    def as_record(self) -> dict:
        """JSON-friendly summary (the image itself is stored separately)."""
        return {
            "label": self.label,
            "clean_prediction": self.clean_prediction,
            "clean_correct": self.clean_correct,
            "prediction": self.prediction,
            "success": self.success,
            "iterations_used": self.iterations_used,
            "loss_trace": list(self.loss_trace),
            "params": self.final_params.as_dict(),
            "quality": self.quality.as_dict(),
        }


def objective(
    image: np.ndarray,
    label: int,
    oracle: Oracle,
    params: PhysicalParams,
    cfg: AttackConfig,
    g: np.ndarray | None = None,
    grid: CoordGrid | None = None,
) -> ObjectiveEval:
    """Evaluate the attack objective and all its gradients at one point.

    In ri mode ``g`` must be None (geometry is G0(alpha)); in ra mode
    ``g`` is the current materialized field. The alpha gradient in ra
    mode follows the anchored parameterization: moving alpha drags the
    whole field through the profile, so it picks up the classifier
    path through G plus the level-set window's dependence on where the
    profile sits.
    """
    cfg.validate()
    image = check_image(image)
    if grid is None:
        grid = build_coord_grid(image.shape[0], image.shape[1])
    if cfg.mode == "ri":
        if g is not None:
            raise ValueError("ri mode does not take a free geometry field")
        g_used = None
    else:
        if g is None:
            raise ValueError("ra mode requires the materialized geometry field")
        g_used = g

    fields = compose_fields(grid, params, g=g_used)
    rendered = np.clip(image * fields.v[:, :, None], 0.0, 1.0)
    cls_loss, loss_grad = oracle.loss_grad(rendered, int(label))
    core, grad_g_core = _gradients_from_fields(image, loss_grad, params, grid, fields)

    f_term = cfg.lambda_f * params.f_inv * params.f_inv
    alpha_term = cfg.lambda_alpha * params.alpha * params.alpha
    grad_f = core.f_inv - 2.0 * cfg.lambda_f * params.f_inv
    grad_alpha = core.alpha - 2.0 * cfg.lambda_alpha * params.alpha

    if cfg.mode == "ri":
        total = cls_loss - f_term - alpha_term
        components = {
            "cls_loss": cls_loss,
            "reg_term": 0.0,
            "f_term": f_term,
            "alpha_term": alpha_term,
        }
        grads = ParamGrads(
            f_inv=grad_f, alpha=grad_alpha, tau=core.tau, chi=core.chi
        )
        return ObjectiveEval(
            total=total,
            components=components,
            grads=grads,
            grad_g=None,
            rendered=rendered,
        )

    g0 = geometry_field_init(grid, params.alpha)
    d = fields.g - g0
    h, h_prime = smoothed_heaviside(
        fields.g, cfg.levelset.z_level, cfg.levelset.h_eps
    )
    reg_val = float(np.sum(d * d * h))
    reg_grad = 2.0 * d * h + d * d * h_prime
    reg_term = cfg.lambda_g * reg_val
    total = cls_loss - reg_term - f_term - alpha_term
    grad_g_total = grad_g_core - cfg.lambda_g * reg_grad
    # Anchored alpha: the window H(G) slides with the profile, and its
    # motion relaxes the penalty at rate sum(d^2 H'(G) R).
    grad_alpha = grad_alpha + cfg.lambda_g * float(np.sum(d * d * h_prime * grid.r))
    components = {
        "cls_loss": cls_loss,
        "reg_term": reg_term,
        "f_term": f_term,
        "alpha_term": alpha_term,
    }
    grads = ParamGrads(f_inv=grad_f, alpha=grad_alpha, tau=core.tau, chi=core.chi)
    return ObjectiveEval(
        total=total,
        components=components,
        grads=grads,
        grad_g=grad_g_total,
        rendered=rendered,
    )


def _sgn(x: float) -> float:
    return float(np.sign(x))


def run_attack(
    image: np.ndarray,
    label: int,
    oracle: Oracle,
    cfg: AttackConfig,
    callback: Callable[[int, PhysicalParams, np.ndarray], None] | None = None,
) -> AttackResult:
    """Optimize the vignetting against one image.

    Runs up to ``cfg.max_iters`` signed projected ascent steps. With
    early stopping on, each iterate is rendered, quantized, and tested;
    the loop exits at the first misclassification. ``callback``, when
    given, receives (iteration, params, materialized G) after every
    update, which the test harness uses to audit feasibility.

    The loss trace holds the objective value at the point each update
    was computed from, so its length always equals iterations_used.
    """
    cfg.validate()
    image = check_image(image)
    if image.shape != tuple(oracle.shape):
        raise ValueError(
            f"image shape {image.shape} does not match oracle {oracle.shape}"
        )
    if not 0 <= label < oracle.classes:
        raise ValueError(f"label {label} out of range for {oracle.classes} classes")

    grid = build_coord_grid(image.shape[0], image.shape[1])
    clean_q = quantize(image)
    clean_pred = oracle.predict(clean_q)
    clean_correct = clean_pred == label

    params = cfg.bounds.initial_params()
    is_ra = cfg.mode == "ra"
    delta_g = np.zeros(grid.shape, dtype=np.float64) if is_ra else None

    def materialize(p: PhysicalParams) -> np.ndarray | None:
        if not is_ra:
            return None
        return np.clip(geometry_field_init(grid, p.alpha) + delta_g, 0.0, 1.0)

    trace: list[float] = []
    iterations = 0
    pred = clean_pred
    adv_q = clean_q

    for t in range(1, cfg.max_iters + 1):
        g = materialize(params)
        ev = objective(image, label, oracle, params, cfg, g=g, grid=grid)
        trace.append(ev.total)

        params = cfg.bounds.project(
            PhysicalParams(
                f_inv=params.f_inv + cfg.steps.f_inv * _sgn(ev.grads.f_inv),
                alpha=params.alpha + cfg.steps.alpha * _sgn(ev.grads.alpha),
                tau=params.tau + cfg.steps.tau * _sgn(ev.grads.tau),
                chi=params.chi + cfg.steps.chi * _sgn(ev.grads.chi),
            )
        )
        if is_ra:
            delta_g = delta_g + cfg.steps.g * np.sign(ev.grad_g)
            g = materialize(params)
            # Keep the residual consistent with the clipped field.
            delta_g = g - geometry_field_init(grid, params.alpha)
        else:
            g = None
        iterations = t

        fields = compose_fields(grid, params, g=g)
        adv_q = quantize(np.clip(image * fields.v[:, :, None], 0.0, 1.0))
        if callback is not None:
            g_report = g if is_ra else fields.g
            callback(t, params, g_report)
        if cfg.early_stop:
            pred = oracle.predict(adv_q)
            if pred != label:
                break

    if not cfg.early_stop:
        pred = oracle.predict(adv_q)
    success = pred != label

    return AttackResult(
        adversarial=adv_q,
        final_params=params,
        final_g=materialize(params),
        label=int(label),
        clean_prediction=int(clean_pred),
        clean_correct=bool(clean_correct),
        prediction=int(pred),
        success=bool(success),
        iterations_used=iterations,
        loss_trace=trace,
        quality=measure_quality(image, adv_q),
    )
