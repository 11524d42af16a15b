"""Run configuration: plain ``key = value`` files with flag overrides."""

from __future__ import annotations

import math
import subprocess
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__

ARCHS = ("gcn", "sage")
POLICIES = ("none", "all", "random", "lowdeg")
EVAL_MODES = ("fixed", "exhaustive")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_float(text: str) -> float:
    """Float parser that accepts ``inf``."""
    return float(str(text).strip())


def parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def parse_optional(conv):
    def _parse(text):
        if text is None or str(text).strip().lower() in ("", "none"):
            return None
        return conv(text)

    return _parse


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    """Everything needed to reproduce a training or evaluation run.

    Every field except ``graph`` has a default.
    """

    graph: str | None = None
    splits: str | None = None
    features: str | None = None
    arch: str = "sage"
    layers: int = 2
    hidden_dim: int = 64
    out_dim: int = 64
    policy: str = "lowdeg"
    delta: float | None = None
    rate: float | None = None
    batch_size: int = 256
    hops: int | None = None
    negs_per_pos: int = 1
    epochs: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    add_self_loops: bool = False
    seed: int = 0
    eval_mode: str = "fixed"
    ks: tuple[int, ...] = (1, 10, 50)
    keep_valid: bool = True
    out: str = "run"

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls().updated(read_config_file(path))

    def updated(self, values: dict) -> "RunConfig":
        """Copy with ``values`` (strings or typed) applied; unknown keys are errors."""
        problems, parsed = [], {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in _FIELD_NAMES:
                problems.append(f"unknown key {key!r}")
                continue
            if raw is None or not isinstance(raw, str):
                parsed[key] = tuple(raw) if key == "ks" and raw is not None else raw
                continue
            try:
                parsed[key] = _PARSERS[key](raw)
            except ValueError as exc:
                problems.append(f"{key}: {exc}")
        if problems:
            raise ConfigError(problems)
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(parsed)
        return RunConfig(**data)

    def problems(self, require_graph: bool = True) -> list[str]:
        out = []
        if require_graph and not self.graph:
            out.append("graph path is required")
        if require_graph and not self.splits:
            out.append("splits directory is required")
        if self.arch not in ARCHS:
            out.append(f"arch must be one of {ARCHS}")
        if self.policy not in POLICIES:
            out.append(f"policy must be one of {POLICIES}")
        if self.eval_mode not in EVAL_MODES:
            out.append(f"eval_mode must be one of {EVAL_MODES}")
        for name in ("layers", "hidden_dim", "out_dim", "batch_size", "negs_per_pos", "epochs"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.hops is not None and self.hops < 0:
            out.append("hops must be >= 0")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            out.append("lr must be a positive finite number")
        if not 0 <= self.momentum < 1:
            out.append("momentum must lie in [0, 1)")
        if self.delta is not None and (math.isnan(self.delta) or self.delta < 0):
            out.append("delta must be >= 0")
        if self.rate is not None and not 0 <= self.rate <= 1:
            out.append("rate must lie in [0, 1]")
        if not self.ks or min(self.ks) < 1:
            out.append("ks must be a non-empty list of integers >= 1")
        return out

    def validate(self, require_graph: bool = True) -> "RunConfig":
        problems = self.problems(require_graph)
        if problems:
            raise ConfigError(problems)
        return self

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))

    def model_params(self) -> dict:
        """Keyword arguments for :class:`~linkexclude.estimator.LinkPredictor`."""
        return dict(
            arch=self.arch,
            num_layers=self.layers,
            hidden_dim=self.hidden_dim,
            out_dim=self.out_dim,
            policy=self.policy,
            delta=self.delta,
            rate=self.rate,
            batch_size=self.batch_size,
            hops=self.hops,
            negs_per_pos=self.negs_per_pos,
            epochs=self.epochs,
            lr=self.lr,
            momentum=self.momentum,
            add_self_loops=self.add_self_loops,
            keep_valid=self.keep_valid,
            eval_mode=self.eval_mode,
            seed=self.seed,
        )


_FIELD_NAMES = tuple(f.name for f in fields(RunConfig))
_PARSERS = {
    "graph": parse_optional(str),
    "splits": parse_optional(str),
    "features": parse_optional(str),
    "arch": lambda s: s.strip().lower(),
    "layers": int,
    "hidden_dim": int,
    "out_dim": int,
    "policy": lambda s: s.strip().lower(),
    "delta": parse_optional(parse_float),
    "rate": parse_optional(parse_float),
    "batch_size": int,
    "hops": parse_optional(int),
    "negs_per_pos": int,
    "epochs": int,
    "lr": parse_float,
    "momentum": parse_float,
    "add_self_loops": parse_bool,
    "seed": int,
    "eval_mode": lambda s: s.strip().lower(),
    "ks": parse_int_list,
    "keep_valid": parse_bool,
    "out": str,
}


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values, problems = {}, []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    if problems:
        raise ConfigError(problems)
    return values


def commit_hash() -> str:
    """Current git commit of the package source, or ``unknown``."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def write_manifest(path, command: str, entries: dict) -> None:
    """Write a reproducibility manifest. Deliberately carries no timestamp."""
    lines = [f"command = {command}", f"version = {__version__}", f"commit = {commit_hash()}"]
    lines += [f"{k} = {format_value(v)}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")
