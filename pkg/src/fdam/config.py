"""Strict JSON experiment configs.

Three sections: ``stack`` (fields of :class:`StackConfig`), ``diagnostics`` and
``fit``. Unknown fields and wrong types are rejected with the dotted path of the
offending field.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .stacklab import MODES, TARGET_KINDS, StackConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DiagnosticsSection:
    bands: int = 8
    cutoff: float = 0.5
    input: str | None = None  # raw tensor file, relative to the config file
    exports: bool = True


@dataclass(frozen=True)
class FitSection:
    targets: list = field(default_factory=lambda: ["highpass", "bandpass", "bandstop", "random"])
    cutoff: float = 0.5
    band_cutoffs: list = field(default_factory=lambda: [0.25, 0.75])
    target_seed: int | None = None
    query: list | None = None
    head: int = 0
    max_iters: int = 2000
    initial_step: float = 0.1
    grad_tol: float = 1e-8
    init_low: float = 1.0
    init_high: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    stack: StackConfig
    diagnostics: DiagnosticsSection
    fit: FitSection | None
    base_dir: Path = Path(".")
    text: str = ""


def _check_type(value, hint, path: str):
    origin = typing.get_origin(hint)
    if origin is typing.Union or origin is types.UnionType:
        args = typing.get_args(hint)
        if value is None and type(None) in args:
            return value
        inner = [a for a in args if a is not type(None)][0]
        return _check_type(value, inner, path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if hint is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    return value


def _section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
    kwargs = {k: _check_type(v, hints[k], f"{path}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{path}: {e}") from None


def parse_config(text: str, source: str = "<config>", base_dir: Path = Path(".")) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    for key in raw:
        if key not in ("stack", "diagnostics", "fit"):
            raise ConfigError(f"{key}: unknown section")
    if "stack" not in raw:
        raise ConfigError("stack: missing required section")
    stack_raw = raw["stack"]
    if isinstance(stack_raw, dict) and "mode" in stack_raw and stack_raw["mode"] not in MODES:
        raise ConfigError(f"stack.mode: must be one of {list(MODES)}, got {stack_raw['mode']!r}")
    stack = _section(StackConfig, stack_raw, "stack")
    if stack.layers < 1:
        raise ConfigError("stack.layers: must be at least 1")
    diag = _section(DiagnosticsSection, raw.get("diagnostics", {}), "diagnostics")
    if diag.bands < 2:
        raise ConfigError("diagnostics.bands: must be at least 2")
    if not 0 < diag.cutoff < 1:
        raise ConfigError("diagnostics.cutoff: must lie in (0, 1)")
    fit = None
    if "fit" in raw:
        fit = _section(FitSection, raw["fit"], "fit")
        for i, kind in enumerate(fit.targets):
            if kind not in TARGET_KINDS:
                raise ConfigError(f"fit.targets[{i}]: unknown target kind {kind!r}; expected one of {list(TARGET_KINDS)}")
        if len(fit.band_cutoffs) != 2 or not 0 < fit.band_cutoffs[0] < fit.band_cutoffs[1] < 1:
            raise ConfigError("fit.band_cutoffs: must be [low, high] with 0 < low < high < 1")
        if not 0 < fit.cutoff < 1:
            raise ConfigError("fit.cutoff: must lie in (0, 1)")
        if fit.query is not None and (len(fit.query) != 2
                                      or not 0 <= fit.query[0] < stack.height or not 0 <= fit.query[1] < stack.width):
            raise ConfigError("fit.query: must be [row, col] inside the grid")
        if not 0 <= fit.head < stack.heads:
            raise ConfigError("fit.head: out of range")
        if fit.max_iters < 0:
            raise ConfigError("fit.max_iters: must be non-negative")
    return ExperimentConfig(stack, diag, fit, base_dir, text)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    return parse_config(text, str(path), path.parent)
