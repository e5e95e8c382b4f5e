"""Command line entry points.

Subcommands:

  render    apply the vignetting model to one image at fixed parameters
  attack    run the attack over a dataset manifest, write a run directory
  sweep     repeat the attack across a declared parameter grid
  eval      re-score a finished run directory and verify its stored rate
  transfer  craft against each listed oracle, score against all of them

Exit codes: 0 on success, 2 for configuration, manifest, image, or
argument problems, 3 for oracle failures (connection loss, protocol
violations, non-finite outputs).

A run directory contains adv/*.png (the adversarial images),
report.json (per-sample records plus the resolved config), and
summary.csv. Reruns with the same config and inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluate
from .attack import PhysicalParams
from .config import RunConfig, config_as_dict, parse_config_file
from .errors import ConfigError, ImageIOError, OracleError
from .fields import build_coord_grid, compose_fields
from .imio import load_image, load_manifest, save_float_grid, save_image
from .oracle import oracle_factory_from_spec

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vignattack",
        description="Physically modeled vignetting attacks on image classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="vignette one image")
    p_render.add_argument("input", help="source image (PNG, PPM, or PGM)")
    p_render.add_argument("--out", required=True, help="output PNG path")
    p_render.add_argument("--f-inv", type=float, default=1.0)
    p_render.add_argument("--alpha", type=float, default=0.0)
    p_render.add_argument("--tau", type=float, default=0.0)
    p_render.add_argument("--chi", type=float, default=0.0)

    for name, help_text in (
        ("attack", "attack every image in a manifest"),
        ("sweep", "attack across a config sweep grid"),
        ("eval", "recheck a finished run directory"),
        ("transfer", "cross-oracle transfer matrix"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run config file")
        p.add_argument("--out", help="override run.out")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--jobs", type=int, help="override run.jobs")
    return parser


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = parse_config_file(args.config)
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    cfg.validate()
    return cfg


def _load_inputs(cfg: RunConfig):
    if not cfg.manifest:
        raise ConfigError("run.manifest is required for this command")
    manifest = load_manifest(cfg.manifest)
    return evaluate.load_dataset(manifest)


def cmd_render(args: argparse.Namespace) -> int:
    image = load_image(args.input)
    params = PhysicalParams(
        f_inv=args.f_inv, alpha=args.alpha, tau=args.tau, chi=args.chi
    )
    params.validate()
    grid = build_coord_grid(image.shape[0], image.shape[1])
    fields = compose_fields(grid, params)
    import numpy as np

    rendered = np.clip(image * fields.v[:, :, None], 0.0, 1.0)
    out = Path(args.out)
    save_image(rendered, out)
    field_path = out.with_suffix(".v.txt")
    save_float_grid(fields.v, field_path)
    print(f"wrote {out} and {field_path}")
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    images, labels, names = _load_inputs(cfg)
    factory = oracle_factory_from_spec(cfg.oracle)
    results = evaluate.attack_dataset(
        images, labels, factory, cfg.attack, jobs=cfg.jobs
    )
    rate = evaluate.attack_success_rate(results, cfg.success_filter)
    considered = sum(evaluate.considered_mask(results, cfg.success_filter))
    successes = sum(
        1
        for r, m in zip(results, evaluate.considered_mask(results, cfg.success_filter))
        if m and r.success
    )

    out_dir = Path(cfg.out)
    samples = []
    for i, (result, name) in enumerate(zip(results, names)):
        adv_rel = f"adv/{i:04d}_{Path(name).stem}.png"
        save_image(result.adversarial, out_dir / adv_rel)
        record = result.as_record()
        record["name"] = name
        record["adv_path"] = adv_rel
        samples.append(record)
    report = {
        "config": config_as_dict(cfg),
        "success_rate": rate,
        "considered": considered,
        "successes": successes,
        "samples": samples,
    }
    evaluate.write_report_json(out_dir / "report.json", report)
    evaluate.write_summary_csv(out_dir / "summary.csv", results, names)
    print(
        f"success rate: {rate:.2f}% ({successes}/{considered} considered, "
        f"{len(results)} total); run written to {out_dir}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    images, labels, _ = _load_inputs(cfg)
    factory = oracle_factory_from_spec(cfg.oracle)
    rows = evaluate.run_sweep(cfg, images, labels, factory)
    out_dir = Path(cfg.out)
    evaluate.write_sweep_csv(out_dir / "sweep.csv", rows)
    for row in rows:
        cells = ", ".join(f"{k}={v}" for k, v in row.items() if k != "success_rate")
        print(f"{cells}: success rate {row['success_rate']:.2f}%")
    print(f"sweep written to {out_dir / 'sweep.csv'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    out_dir = Path(cfg.out)
    report_path = out_dir / "report.json"
    try:
        with open(report_path, "r", encoding="utf-8") as fh:
            report = json.load(fh)
    except OSError as exc:
        raise ImageIOError(f"{report_path}: cannot read run report: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{report_path}: invalid JSON: {exc}") from exc

    oracle_spec = report["config"]["run.oracle"]
    success_filter = report["config"]["run.success_filter"]
    factory = oracle_factory_from_spec(oracle_spec)
    hits = 0
    considered = 0
    with factory() as oracle:
        for sample in report["samples"]:
            if success_filter == "initially_correct" and not sample["clean_correct"]:
                continue
            considered += 1
            adv = load_image(out_dir / sample["adv_path"])
            if oracle.predict(adv) != int(sample["label"]):
                hits += 1
    recomputed = 100.0 * hits / considered if considered else 0.0
    stored = float(report["success_rate"])
    match = recomputed == stored
    evaluate.write_report_json(
        out_dir / "eval_recheck.json",
        {
            "stored_success_rate": stored,
            "recomputed_success_rate": recomputed,
            "samples_rechecked": considered,
            "match": match,
        },
    )
    print(
        f"stored {stored:.2f}%, recomputed {recomputed:.2f}% "
        f"({'match' if match else 'MISMATCH'})"
    )
    return 0 if match else 2


def cmd_transfer(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    if not cfg.transfer_targets:
        raise ConfigError("transfer.targets must list at least one oracle spec")
    images, labels, _ = _load_inputs(cfg)
    factories = [oracle_factory_from_spec(s) for s in cfg.transfer_targets]
    matrix, _ = evaluate.transfer_matrix(
        images,
        labels,
        factories,
        cfg.attack,
        success_filter=cfg.success_filter,
        jobs=cfg.jobs,
    )
    out_dir = Path(cfg.out)
    evaluate.write_transfer_csv(
        out_dir / "transfer.csv", matrix, cfg.transfer_targets
    )
    for spec, row in zip(cfg.transfer_targets, matrix):
        print(f"{spec}: " + ", ".join(f"{v:.2f}%" for v in row))
    print(f"matrix written to {out_dir / 'transfer.csv'}")
    return 0


_COMMANDS = {
    "render": cmd_render,
    "attack": cmd_attack,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
