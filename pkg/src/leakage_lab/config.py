"""Run configuration: ``key = value`` lines grouped under ``[section]`` headers.

Values are Python-style literals (``20``, ``1e-3``, ``"path"``, ``[50, 100]``)
plus ``true``/``false``.  Unknown keys, type mismatches and missing
required keys are reported with the offending line number.
"""

from __future__ import annotations

import ast
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_type_hints

EXPERIMENTS = ("gauss-sweep", "nn-mia", "attr-infer", "counterexample")
SEED_ENV = "LEAKAGE_LAB_SEED"


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, path=None):
        where = f"{path or '<config>'}" + (f":{line}" if line is not None else "")
        super().__init__(f"{where}: {msg}")
        self.line = line


@dataclass
class GaussSection:
    d: int = 20
    sigma2: float = 1.0


@dataclass
class TrainSection:
    """Unset fields take the experiment's protocol defaults."""

    lr: float = 5e-3
    max_epochs: int | None = None
    batch_size: int = 200
    early_stop_delta: float | None = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class MiaSection:
    models_per_n: int = 10
    dim: int = 10
    separation: float = 0.8
    hidden: list[int] = field(default_factory=lambda: [8, 8])
    threshold: float = 0.8
    test_pool: int = 10_000
    calibration_fraction: float = 0.2
    strategies: list[str] = field(default_factory=lambda: ["likelihood", "loss", "mentr"])


@dataclass
class AttrSection:
    models_per_n: int = 20
    instances_per_model: int = 100
    strategies: list[str] = field(default_factory=lambda: ["likelihood", "accuracy", "loss", "gradient"])
    pool_size: int = 11990
    test_pool: int = 2000
    hidden: list[int] = field(default_factory=lambda: [30, 30, 10])
    mia_trials: int = 100
    csv_path: str = ""
    feature_count: int = 66
    label_column: str = "label"
    sensitive_column: str = "writer"
    n_writers: int = 44
    blend: float = 0.2
    writer_warp: float = 0.6
    sample_noise: float = 0.08
    generator_seed: int = 1234


@dataclass
class CounterexampleSection:
    D: float = 0.5
    eps: float = 0.1
    sigma_x: float = 1.0


@dataclass
class RunConfig:
    experiment: str
    seed: int = 0
    trials: int | None = None
    n_grid: list[int] | None = None
    output_path: str = "results.csv"
    threads: int = 1
    gauss: GaussSection = field(default_factory=GaussSection)
    train: TrainSection = field(default_factory=TrainSection)
    mia: MiaSection = field(default_factory=MiaSection)
    attr: AttrSection = field(default_factory=AttrSection)
    counterexample: CounterexampleSection = field(default_factory=CounterexampleSection)

    def __post_init__(self):
        validate(self)


SECTIONS = ("gauss", "train", "mia", "attr", "counterexample")

DEFAULT_TRIALS = {"gauss-sweep": 10_000, "nn-mia": 1000, "attr-infer": 100, "counterexample": 100_000}
DEFAULT_GRID = {
    "gauss-sweep": [50, 100, 200, 500, 1000, 2000, 5000, 10_000],
    "nn-mia": [50, 200, 1000, 4000],
    "attr-infer": [100, 500, 2000, 8000],
    "counterexample": [],
}


def validate(cfg: RunConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {cfg.experiment!r}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.trials is not None and cfg.trials < 1:
        raise ConfigError("trials must be positive")
    if cfg.n_grid is not None:
        if not cfg.n_grid and cfg.experiment != "counterexample":
            raise ConfigError("n_grid must not be empty")
        if any(n < 1 for n in cfg.n_grid):
            raise ConfigError("n_grid entries must be positive")
    if cfg.threads < 0:
        raise ConfigError("threads must be >= 0")
    parent = Path(cfg.output_path).resolve().parent
    if parent.exists() and not os.access(parent, os.W_OK):
        raise ConfigError(f"output directory {parent} is not writable")


def resolved_trials(cfg: RunConfig) -> int:
    return cfg.trials if cfg.trials is not None else DEFAULT_TRIALS[cfg.experiment]


def resolved_grid(cfg: RunConfig) -> list[int]:
    return list(cfg.n_grid) if cfg.n_grid is not None else list(DEFAULT_GRID[cfg.experiment])


def _parse_value(text: str, line: int, path) -> Any:
    if text in ("true", "false"):
        return text == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise ConfigError(f"cannot parse value {text!r}", line, path) from None


def _coerce(value: Any, hint: Any, key: str, line: int, path) -> Any:
    """Check ``value`` against a field annotation; ints are accepted for floats."""
    opts = getattr(hint, "__args__", None)
    origin = getattr(hint, "__origin__", None)
    if origin is list:
        (item,) = hint.__args__
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} expects a list, got {value!r}", line, path)
        return [_coerce(v, item, key, line, path) for v in value]
    if opts and type(None) in opts:
        if value is None:
            return None
        inner = [o for o in opts if o is not type(None)][0]
        return _coerce(value, inner, key, line, path)
    if hint is bool:
        if isinstance(value, bool):
            return value
    elif hint is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif hint is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif hint is str:
        if isinstance(value, str):
            return value
    raise ConfigError(f"{key} expects {getattr(hint, '__name__', hint)}, got {value!r}", line, path)


def parse_config(text: str, path=None, overrides: dict | None = None) -> RunConfig:
    top_hints = get_type_hints(RunConfig)
    values: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    seen: set[tuple[str, str]] = set()
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip() if not _in_string_comment(raw) else raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SECTIONS:
                raise ConfigError(f"unknown section [{current}]", lineno, path)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, val = (part.strip() for part in line.split("=", 1))
        if (current, key) in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        seen.add((current, key))
        parsed = _parse_value(val, lineno, path)
        if current is None:
            if key not in top_hints or key in SECTIONS:
                raise ConfigError(f"unknown key {key!r}", lineno, path)
            values[key] = _coerce(parsed, top_hints[key], key, lineno, path)
        else:
            cls = top_hints[current]
            hints = get_type_hints(cls)
            if key not in hints:
                raise ConfigError(f"unknown key {key!r} in [{current}]", lineno, path)
            sections[current][key] = _coerce(parsed, hints[key], key, lineno, path)
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'", None, path)
    if "seed" not in values:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                values["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    for name in SECTIONS:
        values[name] = top_hints[name](**sections[name])
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], None, path) from None


def _in_string_comment(raw: str) -> bool:
    # '#' inside a quoted value is part of the value
    hash_at = raw.find("#")
    return hash_at != -1 and raw[:hash_at].count('"') % 2 == 1


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("no such file", None, path)
    return parse_config(path.read_text(encoding="utf-8"), path, overrides)


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "None"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return repr(value)


def serialize_config(cfg: RunConfig, extra: dict | None = None) -> str:
    """Canonical text form: every field, declaration order, one per line."""
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name not in SECTIONS:
            lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    for name in SECTIONS:
        lines.append("")
        lines.append(f"[{name}]")
        section = getattr(cfg, name)
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {_fmt(getattr(section, f.name))}")
    text = "\n".join(lines) + "\n"
    if extra:
        text = "".join(f"# {k} = {_fmt(v)}\n" for k, v in extra.items()) + text
    return text
