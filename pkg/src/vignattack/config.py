"""Run configuration: flat key files, environment overrides, sweeps.

Config files are plain text, one ``section.key = value`` assignment
per line, with ``#`` comments and blank lines ignored. Every key is
validated against the registry below; unknown keys are an error rather
than a silent no-op.

Environment variables override file values. The variable name is the
key upper-cased with dots replaced by double underscores and prefixed
with ``VIGNATTACK_``, so ``attack.lambda_g`` becomes
``VIGNATTACK_ATTACK__LAMBDA_G``.

Sweep grids reuse the same key names: a line like

    sweep.bounds.alpha.eps = 0.1, 0.3, 0.5

declares one swept axis with three values. Each value is parsed by the
underlying key's own parser, so types stay consistent.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

from .attack import AttackConfig
from .errors import ConfigError

__all__ = [
    "ENV_PREFIX",
    "RunConfig",
    "parse_config_file",
    "parse_config_text",
    "apply_attack_override",
    "config_as_dict",
]

ENV_PREFIX = "VIGNATTACK_"


@dataclass
class RunConfig:
    manifest: str | None = None
    oracle: str = "toy"
    out: str = "out"
    seed: int = 0
    jobs: int = 1
    success_filter: str = "initially_correct"
    attack: AttackConfig = field(default_factory=AttackConfig)
    # Raw string values per swept key, applied via apply_attack_override.
    sweep_grid: dict[str, list[str]] = field(default_factory=dict)
    transfer_targets: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.jobs < 1:
            raise ConfigError(f"run.jobs must be >= 1, got {self.jobs}")
        if self.success_filter not in ("all", "initially_correct"):
            raise ConfigError(
                "run.success_filter must be 'all' or 'initially_correct', "
                f"got {self.success_filter!r}"
            )
        try:
            self.attack.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {text!r}") from exc


def _parse_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {text!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {text!r}")
    return value


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_str(text: str) -> str:
    return text


# key -> (parser, setter(config, parsed_value))
_KEY_REGISTRY: dict[str, tuple[Callable, Callable]] = {}


def _register(key: str, parser: Callable, setter: Callable) -> None:
    _KEY_REGISTRY[key] = (parser, setter)


def _attack_setter(assign: Callable) -> Callable:
    def setter(cfg: RunConfig, value) -> None:
        assign(cfg.attack, value)

    return setter


def _build_registry() -> None:
    _register("run.manifest", _parse_str, lambda c, v: setattr(c, "manifest", v))
    _register("run.oracle", _parse_str, lambda c, v: setattr(c, "oracle", v))
    _register("run.out", _parse_str, lambda c, v: setattr(c, "out", v))
    _register("run.seed", _parse_int, lambda c, v: setattr(c, "seed", v))
    _register("run.jobs", _parse_int, lambda c, v: setattr(c, "jobs", v))
    _register(
        "run.success_filter",
        _parse_str,
        lambda c, v: setattr(c, "success_filter", v),
    )

    _register(
        "attack.mode", _parse_str, _attack_setter(lambda a, v: setattr(a, "mode", v))
    )
    _register(
        "attack.max_iters",
        _parse_int,
        _attack_setter(lambda a, v: setattr(a, "max_iters", v)),
    )
    _register(
        "attack.early_stop",
        _parse_bool,
        _attack_setter(lambda a, v: setattr(a, "early_stop", v)),
    )
    for lam in ("lambda_f", "lambda_alpha", "lambda_g"):
        _register(
            f"attack.{lam}",
            _parse_float,
            _attack_setter(lambda a, v, lam=lam: setattr(a, lam, v)),
        )
    for step in ("f_inv", "alpha", "tau", "chi", "g"):
        _register(
            f"attack.step_{step}",
            _parse_float,
            _attack_setter(lambda a, v, step=step: setattr(a.steps, step, v)),
        )
    _register(
        "attack.z_level",
        _parse_float,
        _attack_setter(lambda a, v: setattr(a.levelset, "z_level", v)),
    )
    _register(
        "attack.h_eps",
        _parse_float,
        _attack_setter(lambda a, v: setattr(a.levelset, "h_eps", v)),
    )
    for ball in ("f_inv", "alpha", "tau", "chi"):
        _register(
            f"bounds.{ball}.init",
            _parse_float,
            _attack_setter(
                lambda a, v, ball=ball: setattr(getattr(a.bounds, ball), "init", v)
            ),
        )
        _register(
            f"bounds.{ball}.eps",
            _parse_float,
            _attack_setter(
                lambda a, v, ball=ball: setattr(getattr(a.bounds, ball), "eps", v)
            ),
        )


_build_registry()

# Keys that make sense as swept axes.
_SWEEPABLE = {
    key for key in _KEY_REGISTRY if key.startswith(("attack.", "bounds."))
}


def apply_attack_override(cfg: RunConfig, key: str, raw_value: str) -> None:
    """Parse and apply one ``key = value`` assignment."""
    entry = _KEY_REGISTRY.get(key)
    if entry is None:
        raise ConfigError(f"unknown config key {key!r}")
    parser, setter = entry
    try:
        setter(cfg, parser(raw_value.strip()))
    except ConfigError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _apply_line(cfg: RunConfig, key: str, value: str, where: str) -> None:
    if key == "transfer.targets":
        targets = [part.strip() for part in value.split(",") if part.strip()]
        if not targets:
            raise ConfigError(f"{where}: transfer.targets must list oracle specs")
        cfg.transfer_targets = targets
        return
    if key.startswith("sweep."):
        inner = key[len("sweep.") :]
        if inner not in _SWEEPABLE:
            raise ConfigError(f"{where}: {inner!r} is not a sweepable config key")
        values = [part.strip() for part in value.split(",") if part.strip()]
        if len(values) < 1:
            raise ConfigError(f"{where}: sweep axis {inner!r} has no values")
        for v in values:
            # Parse eagerly so a bad list fails at load time.
            _KEY_REGISTRY[inner][0](v)
        cfg.sweep_grid[inner] = values
        return
    try:
        apply_attack_override(cfg, key, value)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config_text(
    text: str, source: str = "<config>", env: Mapping[str, str] | None = None
) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        _apply_line(cfg, key.strip(), value.strip(), f"{source}:{lineno}")
    _apply_env(cfg, os.environ if env is None else env)
    cfg.validate()
    return cfg


def parse_config_file(path: str | Path, env: Mapping[str, str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    return parse_config_text(text, source=str(path), env=env)


def _apply_env(cfg: RunConfig, env: Mapping[str, str]) -> None:
    for name in sorted(env):
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
        _apply_line(cfg, key, env[name], f"environment variable {name}")


def sweep_combinations(cfg: RunConfig) -> list[dict[str, str]]:
    """Cartesian product of the sweep grid, axes in declaration order."""
    import itertools

    if not cfg.sweep_grid:
        raise ConfigError("no sweep.* axes declared in the config")
    keys = list(cfg.sweep_grid)
    combos = []
    for values in itertools.product(*(cfg.sweep_grid[k] for k in keys)):
        combos.append(dict(zip(keys, values)))
    return combos


def build_swept_config(cfg: RunConfig, combo: dict[str, str]) -> RunConfig:
    """A deep-enough copy of ``cfg`` with one sweep combination applied."""
    import copy

    swept = replace(cfg, attack=copy.deepcopy(cfg.attack))
    for key, value in combo.items():
        apply_attack_override(swept, key, value)
    swept.validate()
    return swept


def config_as_dict(cfg: RunConfig) -> dict:
    """Flat, JSON-ready echo of the resolved configuration."""
    a = cfg.attack
    out = {
        "run.manifest": cfg.manifest,
        "run.oracle": cfg.oracle,
        "run.out": cfg.out,
        "run.seed": cfg.seed,
        "run.jobs": cfg.jobs,
        "run.success_filter": cfg.success_filter,
        "attack.mode": a.mode,
        "attack.max_iters": a.max_iters,
        "attack.early_stop": a.early_stop,
        "attack.lambda_f": a.lambda_f,
        "attack.lambda_alpha": a.lambda_alpha,
        "attack.lambda_g": a.lambda_g,
        "attack.step_f_inv": a.steps.f_inv,
        "attack.step_alpha": a.steps.alpha,
        "attack.step_tau": a.steps.tau,
        "attack.step_chi": a.steps.chi,
        "attack.step_g": a.steps.g,
        "attack.z_level": a.levelset.z_level,
        "attack.h_eps": a.levelset.h_eps,
    }
    for name in ("f_inv", "alpha", "tau", "chi"):
        ball = getattr(a.bounds, name)
        out[f"bounds.{name}.init"] = ball.init
        out[f"bounds.{name}.eps"] = ball.eps
    if cfg.sweep_grid:
        out["sweep"] = {k: list(v) for k, v in cfg.sweep_grid.items()}
    if cfg.transfer_targets:
        out["transfer.targets"] = list(cfg.transfer_targets)
    return out
