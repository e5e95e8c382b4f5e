"""Dataset attacks, rates, transfer, sweeps, and report writers."""

import json
import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from vignattack.attack import AttackConfig, AttackResult, StepSizes
from vignattack.config import RunConfig, parse_config_text
from vignattack.errors import ManifestError
from vignattack.evaluate import (
    attack_dataset,
    attack_success_rate,
    considered_mask,
    load_dataset,
    run_sweep,
    transfer_matrix,
    write_report_json,
    write_summary_csv,
    write_sweep_csv,
    write_transfer_csv,
)
from vignattack.fields import PhysicalParams
from vignattack.metrics import QualityMetrics
from vignattack.oracle import InProcessOracle
from vignattack.toydata import build_toy_suite

from test_oracle import make_classifier


def fake_result(label, clean_prediction, prediction, psnr=30.0) -> AttackResult:
    return AttackResult(
        adversarial=np.zeros((2, 2, 1)),
        final_params=PhysicalParams(),
        final_g=None,
        label=label,
        clean_prediction=clean_prediction,
        clean_correct=clean_prediction == label,
        prediction=prediction,
        success=prediction != label,
        iterations_used=3,
        loss_trace=[0.1, 0.2, 0.3],
        quality=QualityMetrics(psnr=psnr, ssim=0.9, mean_abs_delta=0.01),
    )


# ---------------------------------------------------------------------------
# Rates and filters


def test_success_rate_filters():
    results = [
        fake_result(0, 0, 1),   # initially correct, flipped
        fake_result(1, 1, 1),   # initially correct, held
        fake_result(2, 0, 1),   # initially wrong, "flipped"
        fake_result(1, 1, 0),   # initially correct, flipped
    ]
    assert attack_success_rate(results, "initially_correct") == pytest.approx(200.0 / 3)
    assert attack_success_rate(results, "all") == pytest.approx(75.0)


def test_success_rate_rejects_empty():
    with pytest.raises(ValueError):
        attack_success_rate([])


def test_success_rate_zero_considered_is_zero():
    results = [fake_result(2, 0, 1)]
    assert attack_success_rate(results, "initially_correct") == 0.0


def test_considered_mask_unknown_filter():
    with pytest.raises(ValueError):
        considered_mask([fake_result(0, 0, 1)], "sometimes")


# ---------------------------------------------------------------------------
# Dataset attack runs


@pytest.fixture(scope="module")
def small_batch(packaged_dataset_module):
    images, labels, _ = packaged_dataset_module
    return images[:8], labels[:8]


@pytest.fixture(scope="module")
def packaged_dataset_module():
    from vignattack.evaluate import load_dataset
    from vignattack.toydata import load_packaged_suite

    manifest, _ = load_packaged_suite()
    return load_dataset(manifest)


def test_attack_dataset_preserves_order_and_determinism(
    packaged_classifier, small_batch
):
    images, labels = small_batch
    cfg = AttackConfig(mode="ra", max_iters=10)
    factory = lambda: InProcessOracle(packaged_classifier)
    first = attack_dataset(images, labels, factory, cfg)
    second = attack_dataset(images, labels, factory, cfg)
    assert len(first) == len(images)
    for a, b in zip(first, second):
        assert a.loss_trace == b.loss_trace
        assert_array_equal(a.adversarial, b.adversarial)
        assert a.final_params.as_dict() == b.final_params.as_dict()


def test_attack_dataset_parallel_matches_serial(packaged_classifier, small_batch):
    images, labels = small_batch
    cfg = AttackConfig(mode="ra", max_iters=10)
    factory = lambda: InProcessOracle(packaged_classifier)
    serial = attack_dataset(images, labels, factory, cfg, jobs=1)
    parallel = attack_dataset(images, labels, factory, cfg, jobs=3)
    for a, b in zip(serial, parallel):
        assert a.loss_trace == b.loss_trace
        assert_array_equal(a.adversarial, b.adversarial)


def test_load_dataset_rejects_empty_manifest(tmp_path):
    from vignattack.imio import load_manifest

    path = tmp_path / "m.csv"
    path.write_text("path,label\n")
    with pytest.raises(ManifestError):
        load_dataset(load_manifest(path))


# ---------------------------------------------------------------------------
# Transfer


def test_transfer_diagonal_equals_whitebox(packaged_classifier, small_batch):
    images, labels = small_batch
    other = build_toy_suite(1).classifier
    factories = [
        lambda: InProcessOracle(packaged_classifier),
        lambda: InProcessOracle(other),
    ]
    cfg = AttackConfig(mode="ra", max_iters=15)
    matrix, per_source = transfer_matrix(images, labels, factories, cfg)
    assert len(matrix) == 2 and all(len(row) == 2 for row in matrix)
    for i, row in enumerate(matrix):
        whitebox = attack_success_rate(per_source[i], "initially_correct")
        assert row[i] == whitebox
        for value in row:
            assert 0.0 <= value <= 100.0


def test_transfer_requires_an_oracle(small_batch):
    images, labels = small_batch
    with pytest.raises(ValueError):
        transfer_matrix(images, labels, [], AttackConfig())


# ---------------------------------------------------------------------------
# Sweeps


def test_run_sweep_rows_follow_declaration_order(packaged_classifier, small_batch):
    images, labels = small_batch
    run_cfg = parse_config_text(
        "\n".join(
            [
                "attack.max_iters = 10",
                "sweep.attack.lambda_g = 0, 1e6",
                "sweep.attack.mode = ra",
            ]
        ),
        env={},
    )
    rows = run_sweep(run_cfg, images, labels,
                     lambda: InProcessOracle(packaged_classifier))
    assert [(r["attack.lambda_g"], r["attack.mode"]) for r in rows] == [
        ("0", "ra"),
        ("1e6", "ra"),
    ]
    assert all("success_rate" in r for r in rows)
    # Free carving must beat a pinned field.
    assert rows[0]["success_rate"] >= rows[1]["success_rate"]


# ---------------------------------------------------------------------------
# Writers


def test_summary_csv_layout_and_determinism(tmp_path):
    results = [fake_result(0, 0, 1), fake_result(1, 1, 1, psnr=math.inf)]
    path_a = tmp_path / "a.csv"
    path_b = tmp_path / "b.csv"
    write_summary_csv(path_a, results, names=["x.png", "y.png"])
    write_summary_csv(path_b, results, names=["x.png", "y.png"])
    content = path_a.read_bytes()
    assert content == path_b.read_bytes()
    lines = content.decode().splitlines()
    assert lines[0] == (
        "index,name,label,clean_prediction,clean_correct,prediction,success,"
        "iterations,psnr,ssim,mean_abs_delta,f_inv,alpha,tau,chi"
    )
    assert len(lines) == 3
    assert lines[1].startswith("0,x.png,0,0,true,1,true,3,30.0")
    # Infinite PSNR is written as the cap.
    assert ",99.0," in lines[2]


def test_report_json_caps_and_round_trips(tmp_path):
    path = tmp_path / "report.json"
    write_report_json(
        path,
        {
            "rate": 50.0,
            "nested": {"psnr": math.inf, "ssim": math.nan},
            "items": [1.0, -math.inf],
        },
    )
    text = path.read_text()
    assert text.endswith("\n")
    data = json.loads(text)
    assert data["nested"]["psnr"] == 99.0
    assert data["nested"]["ssim"] is None
    assert data["items"][1] == -99.0


def test_sweep_csv_writer(tmp_path):
    rows = [
        {"attack.lambda_g": "0", "success_rate": 62.5},
        {"attack.lambda_g": "1", "success_rate": 37.5},
    ]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "attack.lambda_g,success_rate"
    assert lines[1] == "0,62.5"
    assert len(lines) == 3


def test_transfer_csv_writer(tmp_path):
    path = tmp_path / "transfer.csv"
    write_transfer_csv(path, [[50.0, 25.0], [10.0, 40.0]], ["toy", "builtin:w.npz"])
    lines = path.read_text().splitlines()
    assert lines[0] == "source,toy,builtin:w.npz"
    assert lines[1] == "toy,50.0,25.0"
    assert lines[2] == "builtin:w.npz,10.0,40.0"
