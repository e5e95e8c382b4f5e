"""Physically modeled vignetting attacks on image classifiers.

The package simulates lens vignetting with a four-parameter physical
model (reciprocal focal length, linear falloff slope, sensor tilt
angle and axis), then optimizes those parameters, and optionally a
free per-pixel geometric field held in check by a level-set
regularizer, to flip a classifier's prediction while staying
physically plausible. A small evaluation harness measures success
rates, cross-model transfer, perceptual quality, and robustness to a
radial gain correction defense.
"""

from .attack import (
    AttackConfig,
    AttackResult,
    ObjectiveEval,
    ParamBall,
    ParamBounds,
    StepSizes,
    objective,
    run_attack,
)
from .errors import (
    ConfigError,
    ImageIOError,
    ManifestError,
    OracleError,
    OracleTransportError,
    ProtocolError,
)
from .evaluate import (
    attack_dataset,
    attack_success_rate,
    run_sweep,
    transfer_matrix,
)
from .fields import (
    CoordGrid,
    ParamGrads,
    PhysicalParams,
    VignetteFields,
    apply_vignette,
    build_coord_grid,
    compose_fields,
    geometry_field_init,
    illumination_field,
    tilt_field,
    vignette_gradients,
)
from .imio import (
    DatasetManifest,
    load_image,
    load_manifest,
    quantize,
    save_image,
)
from .levelset import LevelSetConfig, levelset_regularizer, smoothed_heaviside
from .metrics import (
    CorrectionResult,
    QualityMetrics,
    mean_abs_delta,
    measure_quality,
    psnr,
    radial_correction,
    ssim,
)
from .oracle import (
    InProcessOracle,
    Oracle,
    OracleServer,
    ReferenceClassifier,
    RemoteOracle,
    oracle_factory_from_spec,
)
from .toydata import ToySuite, build_toy_suite, write_toy_suite

__version__ = "0.1.0"
