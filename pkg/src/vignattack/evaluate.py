"""Evaluation harness: batch runs, success rates, transfer, sweeps, reports.

Success rate conventions: a sample is "considered" either always
("all") or only when the source oracle classified the clean image
correctly ("initially_correct", the default, since fooling a model
that was already wrong proves nothing). Rates are percentages over
considered samples.

Transferability is a K x K matrix: row k holds the success rates of
adversarial images crafted against oracle k when scored by every
oracle, so the diagonal reproduces the white-box rates. The considered
set of a row is decided by the row's own source oracle.

All report writers emit byte-deterministic output for a given input:
stable key order, repr-based float formatting, and newline line
endings. Infinite PSNR (an unchanged image) is written as 99.0.
"""

from __future__ import annotations

import csv
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .attack import AttackConfig, AttackResult, run_attack
from .config import RunConfig, build_swept_config, sweep_combinations
from .errors import ManifestError
from .imio import DatasetManifest, load_image
from .metrics import PSNR_CAP
from .oracle import Oracle

__all__ = [
    "load_dataset",
    "attack_dataset",
    "attack_success_rate",
    "considered_mask",
    "transfer_matrix",
    "run_sweep",
    "write_summary_csv",
    "write_report_json",
    "write_sweep_csv",
    "write_transfer_csv",
]


def load_dataset(
    manifest: DatasetManifest,
) -> tuple[list[np.ndarray], list[int], list[str]]:
    """Load every manifest entry; returns (images, labels, names)."""
    if len(manifest) == 0:
        raise ManifestError("manifest lists no images")
    images, labels, names = [], [], []
    for entry in manifest.entries:
        images.append(load_image(entry.path))
        labels.append(entry.label)
        names.append(entry.path.name)
    return images, labels, names


def attack_dataset(
    images: Sequence[np.ndarray],
    labels: Sequence[int],
    oracle_factory: Callable[[], Oracle],
    cfg: AttackConfig,
    jobs: int = 1,
) -> list[AttackResult]:
    """Attack each image, preserving input order in the results.

    With ``jobs`` > 1 samples run on a thread pool. A reentrant oracle
    is shared; otherwise each worker thread gets its own instance from
    the factory (remote oracles keep one connection per worker).
    """
    if len(images) != len(labels):
        raise ValueError("images and labels length mismatch")
    if len(images) == 0:
        raise ValueError("empty dataset")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")

    if jobs == 1:
        with oracle_factory() as oracle:
            return [
                run_attack(img, lbl, oracle, cfg) for img, lbl in zip(images, labels)
            ]

    probe = oracle_factory()
    local = threading.local()
    opened: list[Oracle] = [probe]
    opened_lock = threading.Lock()

    if probe.reentrant:

        def get_oracle() -> Oracle:
            return probe

    else:

        def get_oracle() -> Oracle:
            oracle = getattr(local, "oracle", None)
            if oracle is None:
                oracle = oracle_factory()
                local.oracle = oracle
                with opened_lock:
                    opened.append(oracle)
            return oracle

    def work(item: tuple[np.ndarray, int]) -> AttackResult:
        img, lbl = item
        return run_attack(img, lbl, get_oracle(), cfg)

    try:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, zip(images, labels)))
    finally:
        for oracle in opened:
            oracle.close()


def considered_mask(
    results: Sequence[AttackResult], success_filter: str = "initially_correct"
) -> list[bool]:
    if success_filter == "all":
        return [True] * len(results)
    if success_filter == "initially_correct":
        return [r.clean_correct for r in results]
    raise ValueError(f"unknown success filter {success_filter!r}")


def attack_success_rate(
    results: Sequence[AttackResult], success_filter: str = "initially_correct"
) -> float:
    """Percentage of considered samples whose attack succeeded."""
    if len(results) == 0:
        raise ValueError("no attack results to score")
    mask = considered_mask(results, success_filter)
    total = sum(mask)
    if total == 0:
        return 0.0
    hits = sum(1 for r, m in zip(results, mask) if m and r.success)
    return 100.0 * hits / total


def transfer_matrix(
    images: Sequence[np.ndarray],
    labels: Sequence[int],
    oracle_factories: Sequence[Callable[[], Oracle]],
    cfg: AttackConfig,
    success_filter: str = "initially_correct",
    jobs: int = 1,
) -> tuple[list[list[float]], list[list[AttackResult]]]:
    """Craft against each oracle, score the results against all of them.

    Returns (matrix, per-source results). matrix[src][dst] is the
    percentage of the source's considered samples that oracle ``dst``
    misclassifies. Every entry, including the diagonal, is computed by
    re-predicting the stored adversarial image, and predictions are
    deterministic, so the diagonal equals the white-box rates exactly.
    """
    if len(oracle_factories) == 0:
        raise ValueError("need at least one oracle")
    all_results: list[list[AttackResult]] = []
    matrix: list[list[float]] = []
    for src_factory in oracle_factories:
        results = attack_dataset(images, labels, src_factory, cfg, jobs=jobs)
        all_results.append(results)
        mask = considered_mask(results, success_filter)
        total = sum(mask)
        row = []
        for dst_factory in oracle_factories:
            if total == 0:
                row.append(0.0)
                continue
            with dst_factory() as dst:
                hits = 0
                for result, m in zip(results, mask):
                    if not m:
                        continue
                    if dst.predict(result.adversarial) != result.label:
                        hits += 1
            row.append(100.0 * hits / total)
        matrix.append(row)
    return matrix, all_results


def run_sweep(
    run_cfg: RunConfig,
    images: Sequence[np.ndarray],
    labels: Sequence[int],
    oracle_factory: Callable[[], Oracle],
) -> list[dict[str, object]]:
    """Re-run the attack across the config's sweep grid.

    Each row maps the swept keys to their values (as written in the
    config) plus the resulting ``success_rate``.
    """
    rows: list[dict[str, object]] = []
    for combo in sweep_combinations(run_cfg):
        swept = build_swept_config(run_cfg, combo)
        results = attack_dataset(
            images, labels, oracle_factory, swept.attack, jobs=run_cfg.jobs
        )
        rate = attack_success_rate(results, run_cfg.success_filter)
        row: dict[str, object] = dict(combo)
        row["success_rate"] = rate
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Report writers.


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            value = PSNR_CAP if value > 0 else -PSNR_CAP
        return repr(value)
    return str(value)


def _cap_floats(obj: object) -> object:
    """Make a JSON-safe copy: infinities capped, arrays to lists."""
    if isinstance(obj, dict):
        return {k: _cap_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_cap_floats(v) for v in obj]
    if isinstance(obj, float):
        if math.isinf(obj):
            return PSNR_CAP if obj > 0 else -PSNR_CAP
        if math.isnan(obj):
            return None
        return obj
    return obj


def write_summary_csv(
    path: str | Path,
    results: Sequence[AttackResult],
    names: Sequence[str],
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "index",
                "name",
                "label",
                "clean_prediction",
                "clean_correct",
                "prediction",
                "success",
                "iterations",
                "psnr",
                "ssim",
                "mean_abs_delta",
                "f_inv",
                "alpha",
                "tau",
                "chi",
            ]
        )
        for i, (result, name) in enumerate(zip(results, names)):
            p = result.final_params
            writer.writerow(
                [
                    i,
                    name,
                    result.label,
                    result.clean_prediction,
                    _fmt(result.clean_correct),
                    result.prediction,
                    _fmt(result.success),
                    result.iterations_used,
                    _fmt(result.quality.psnr),
                    _fmt(result.quality.ssim),
                    _fmt(result.quality.mean_abs_delta),
                    _fmt(p.f_inv),
                    _fmt(p.alpha),
                    _fmt(p.tau),
                    _fmt(p.chi),
                ]
            )


def write_report_json(path: str | Path, report: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_cap_floats(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sweep_csv(path: str | Path, rows: Sequence[dict[str, object]]) -> None:
    if not rows:
        raise ValueError("no sweep rows to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = [k for k in rows[0] if k != "success_rate"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys + ["success_rate"])
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in keys] + [_fmt(row["success_rate"])])


def write_transfer_csv(
    path: str | Path, matrix: Sequence[Sequence[float]], specs: Sequence[str]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source"] + list(specs))
        for spec, row in zip(specs, matrix):
            writer.writerow([spec] + [_fmt(v) for v in row])
