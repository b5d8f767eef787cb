"""Run configuration: TOML parsing, validation, overrides, round-trip save.

A config file has sections [dataset], [stream], [model], [optimizer],
[schedule], [run]; every field has a default, unknown keys are rejected
with their location, and range violations name the offending field path.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .datasets import GENERATORS
from .optim import KINDS, VARIANTS, HyperParams, Schedule

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "save_config", "apply_overrides"]


class ConfigError(ValueError):
    """Invalid configuration, with the offending location in the message."""


@dataclass(frozen=True)
class DatasetConfig:
    generator: str = "gaussian-blobs"  # or "spirals" or "csv"
    classes: int = 10
    dim: int = 16
    separation: float = 2.5
    samples_per_class: int = 100
    noise: float = 0.2
    seed: int = 0
    train_csv: str = ""
    test_csv: str = ""


@dataclass(frozen=True)
class StreamConfig:
    phases: int = 5
    classes_per_phase: int = 2
    replay_capacity: int = 200
    anchor: float = 0.0
    order_seed: int = -1  # -1 keeps ascending label order


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (32,)
    activation: str = "relu"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "flad"
    variant: str = "noise-component"
    eta: float = 0.1
    rho: float = 0.2
    gamma: float = 0.5
    sigma: float = 0.5
    lambda0: float = 0.9
    lambda1: float = 0.9
    c: float = 1e-12
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def hyper(self) -> HyperParams:
        return HyperParams(
            eta=self.eta,
            rho=self.rho,
            gamma=self.gamma,
            sigma=self.sigma,
            lambda0=self.lambda0,
            lambda1=self.lambda1,
            c=self.c,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
        )


@dataclass(frozen=True)
class ScheduleConfig:
    lr_decay_points: tuple = (0.3, 0.6, 0.85)
    theorem_mode: bool = False
    flad_window: tuple = (0.0, 1.0)

    def schedule(self) -> Schedule:
        return Schedule(
            lr_decay_points=tuple(self.lr_decay_points),
            theorem_mode=self.theorem_mode,
            flad_window=tuple(self.flad_window),
        )


@dataclass(frozen=True)
class RunSection:
    epochs: int = 50
    batchsize: int = 128
    seeds: tuple = (1, 2, 3)
    output_dir: str = "runs/latest"


_SECTIONS = {
    "dataset": DatasetConfig,
    "stream": StreamConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "schedule": ScheduleConfig,
    "run": RunSection,
}


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    stream: StreamConfig = field(default_factory=StreamConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        out = {}
        for section, section_cls in _SECTIONS.items():
            values = dataclasses.asdict(getattr(self, section))
            out[section] = {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}
        return out


def _coerce(section: str, key: str, value, target_type):
    path = f"{section}.{key}"
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if target_type is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected an array, got {value!r}")
        return tuple(value)
    raise ConfigError(f"{path}: unsupported field type")  # pragma: no cover


def parse_config(raw: dict, source: str = "<config>") -> RunConfig:
    """Build and validate a RunConfig from nested dicts (TOML shape)."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a table of sections")
    sections = {}
    for section, value in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(
                f"{source}: unknown section [{section}], expected one of {sorted(_SECTIONS)}"
            )
        if not isinstance(value, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        section_cls = _SECTIONS[section]
        known = {f.name: f.type for f in dataclasses.fields(section_cls)}
        type_map = {f.name: type(getattr(section_cls(), f.name)) for f in dataclasses.fields(section_cls)}
        kwargs = {}
        for key, item in value.items():
            if key not in known:
                raise ConfigError(
                    f"{source}: unknown key '{section}.{key}', expected one of {sorted(known)}"
                )
            kwargs[key] = _coerce(section, key, item, type_map[key])
        sections[section] = section_cls(**kwargs)
    cfg = RunConfig(**sections)
    _validate(cfg)
    return cfg


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _validate(cfg: RunConfig) -> None:
    ds = cfg.dataset
    if ds.generator not in (*GENERATORS, "csv"):
        _fail("dataset.generator", f"must be one of {(*GENERATORS, 'csv')}, got {ds.generator!r}")
    if ds.generator == "csv":
        if not ds.train_csv or not ds.test_csv:
            _fail("dataset", "csv generator requires train_csv and test_csv paths")
    else:
        if ds.classes < 2:
            _fail("dataset.classes", f"must be at least 2, got {ds.classes}")
        if ds.samples_per_class < 2:
            _fail("dataset.samples_per_class", f"must be at least 2, got {ds.samples_per_class}")
        if ds.dim < 1:
            _fail("dataset.dim", f"must be positive, got {ds.dim}")

    st = cfg.stream
    if st.phases < 1:
        _fail("stream.phases", f"must be at least 1, got {st.phases}")
    if st.classes_per_phase < 1:
        _fail("stream.classes_per_phase", f"must be at least 1, got {st.classes_per_phase}")
    if st.replay_capacity < 0:
        _fail("stream.replay_capacity", f"must be non-negative, got {st.replay_capacity}")
    if st.anchor < 0:
        _fail("stream.anchor", f"must be non-negative, got {st.anchor}")
    if ds.generator != "csv" and st.phases * st.classes_per_phase > ds.classes:
        _fail(
            "stream",
            f"{st.phases} phases x {st.classes_per_phase} classes per phase "
            f"exceed the {ds.classes} dataset classes",
        )

    if not cfg.model.hidden or any(
        (not isinstance(h, int)) or h < 1 for h in cfg.model.hidden
    ):
        _fail("model.hidden", f"must be a non-empty list of positive widths, got {cfg.model.hidden}")
    if cfg.model.activation not in ("relu", "tanh"):
        _fail("model.activation", f"must be 'relu' or 'tanh', got {cfg.model.activation!r}")

    opt = cfg.optimizer
    if opt.kind not in KINDS:
        _fail("optimizer.kind", f"must be one of {KINDS}, got {opt.kind!r}")
    if opt.variant not in VARIANTS:
        _fail("optimizer.variant", f"must be one of {VARIANTS}, got {opt.variant!r}")
    if opt.kind == "flad" and opt.variant != "noise-component":
        _fail("optimizer.variant", "the flad kind requires 'noise-component'")
    try:
        opt.hyper()
    except ValueError as exc:
        raise ConfigError(f"optimizer: {exc}") from exc
    try:
        cfg.schedule.schedule()
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from exc

    run = cfg.run
    if run.epochs < 1:
        _fail("run.epochs", f"must be at least 1, got {run.epochs}")
    if run.batchsize < 1:
        _fail("run.batchsize", f"must be at least 1, got {run.batchsize}")
    if not run.seeds or any(isinstance(s, bool) or not isinstance(s, int) for s in run.seeds):
        _fail("run.seeds", f"must be a non-empty list of integers, got {run.seeds}")


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a TOML config file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, source=str(path))


def apply_overrides(raw: dict, assignments: list[str]) -> dict:
    """Merge dotted key=value overrides (e.g. optimizer.rho=0.1) into a raw
    config dict. Values parse as TOML scalars; bare words become strings."""
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in raw.items()}
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override {assignment!r} must look like section.key=value")
        key, _, text = assignment.partition("=")
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {key!r} must be section.key")
        section, name = parts
        try:
            value = tomllib.loads(f"v = {text.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = text.strip()
        out.setdefault(section, {})[name] = value
    return out


def _emit(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        return text if any(ch in text for ch in ".eE") else text + ".0"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r} to TOML")


def save_config(cfg: RunConfig, path: str | Path) -> None:
    """Write a config as TOML; load_config(save_config(x)) == x."""
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {_emit(value)}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
