"""Run configuration: nested dataclasses loaded from a YAML file plus ``key=value`` overrides.

Defaults follow the published training setup wherever one is given
(50 diffusion steps, linear betas 1e-4..0.5, 8 denoiser layers at width 128,
lr 1e-3 then 4e-4 after epoch 20, weight decay 1e-6, patience 5, 50 samples).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

CONFIG_ENV = "COST_ST_CONFIG"


@dataclass
class DataConfig:
    path: str | None = None  # series file; when unset a synthetic dataset is generated
    format: str = "stbin"
    synthetic: str = "grid_periodic"
    synthetic_params: dict = field(default_factory=dict)
    interval_minutes: int = 60  # CSV only
    start_epoch_seconds: int = 0  # CSV only


@dataclass
class WindowConfig:
    M: int = 12
    P: int = 12
    eval_stride: int | None = None  # forecast/validation window stride; None means P


@dataclass
class SplitConfig:
    ratios: tuple = (6, 2, 2)


@dataclass
class MeanConfig:
    enabled: bool = True  # False trains the diffusion model on the raw target
    hidden: int = 64
    n_blocks: int = 4


@dataclass
class DenoiserConfig:
    dim: int = 128
    n_layers: int = 8


@dataclass
class ScheduleConfig:
    n_steps: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.5


@dataclass
class TrainConfig:
    epochs: int = 50
    patience: int = 5
    lr: float = 1e-3
    lr_late: float = 4e-4
    lr_switch_epoch: int = 20
    batch_size: int = 32
    weight_decay: float = 1e-6
    val_samples: int = 3


@dataclass
class SampleConfig:
    n_samples: int = 50
    posterior_mode: str = "per_step"
    jobs: int = 1
    member_chunk: int = 10
    precision: str = "float32"  # dtype of denoiser evaluation while sampling


@dataclass
class ScaleConfig:
    threshold: float = 0.1
    power: int = 2  # 2 injects the variance, 1 the standard deviation
    include_dc: bool = False


@dataclass
class MetricsConfig:
    n_quantile_intervals: int = 10
    alpha_ci: float = 0.1
    point: str = "mean"
    picp_levels: tuple = tuple(round(0.05 * i, 2) for i in range(1, 20))
    pit_bins: int = 10


@dataclass
class RunConfig:
    seed: int = 0
    workdir: str = "run"
    data: DataConfig = field(default_factory=DataConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    mean: MeanConfig = field(default_factory=MeanConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    scale: ScaleConfig = field(default_factory=ScaleConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    @property
    def eval_stride(self) -> int:
        return self.windows.eval_stride or self.windows.P

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def fingerprint(self) -> str:
        """Hash of every field that can change trained weights.

        Forecast-time knobs (ensemble size, fan-out) and metric settings are
        left out so one trained pair can be sampled and scored many ways.
        """
        d = self.to_dict()
        d.pop("workdir")
        d.pop("metrics")
        for key in ("n_samples", "jobs", "member_chunk"):
            d["sample"].pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self) -> "RunConfig":
        if self.windows.M < 1 or self.windows.P < 1:
            raise ConfigError("windows.M and windows.P must be positive")
        if self.sample.posterior_mode not in ("per_step", "cumulative"):
            raise ConfigError(f"unknown posterior_mode {self.sample.posterior_mode!r}")
        if self.scale.power not in (1, 2):
            raise ConfigError("scale.power must be 1 or 2")
        if self.metrics.point not in ("mean", "median"):
            raise ConfigError("metrics.point must be mean or median")
        if self.sample.precision not in ("float32", "float64"):
            raise ConfigError("sample.precision must be float32 or float64")
        if self.sample.n_samples < 1:
            raise ConfigError("sample.n_samples must be >= 1")
        return self


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {where + key!r}")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, f"{where}{key}.")
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data or {}, "").validate()


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars."""
    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a scalar")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path=None, overrides=()) -> RunConfig:
    path = path or os.environ.get(CONFIG_ENV)
    data = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return from_dict(apply_overrides(data, overrides))
