"""Versioned pipeline configuration, validated strictly before any stage runs."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .classifiers import MODEL_KINDS
from .errors import ConfigError

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DeviceInput(_Strict):
    id: str
    path: Path
    timestamp_column: str = "timestamp_ms"
    channels: dict[str, str] = Field(default_factory=dict)


class SyntheticInput(_Strict):
    n_subjects: int = Field(3, ge=1)
    trials: int = Field(3, ge=1)
    duration_s: float = Field(4.0, gt=0)
    sample_rate_hz: float = Field(18.0, gt=0)
    noise_std_g: float = Field(0.05, ge=0)
    n_distractors: int = Field(4, ge=0)
    margin_g: float = Field(0.25, ge=0)


class InputConfig(_Strict):
    devices: Optional[list[DeviceInput]] = None
    synthetic: Optional[SyntheticInput] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.devices is None) == (self.synthetic is None):
            raise ValueError("input needs exactly one of 'devices' or 'synthetic'")
        if self.devices is not None:
            ids = [d.id for d in self.devices]
            if not ids or len(set(ids)) != len(ids):
                raise ValueError("device ids must be present and unique")
        return self


class SyncConfig(_Strict):
    reference: str = "waist"
    tolerance_ms: int = Field(10, gt=0)


class FeatureConfig(_Strict):
    derive: bool = True
    window: int = Field(5, ge=1)


class SignalConfig(_Strict):
    axes: tuple[str, str, str] = ("waist_ax", "waist_ay", "waist_az")
    beta: float = Field(2.0, gt=0)
    refractory_ms: int = Field(500, ge=0)


class SplitConfig(_Strict):
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    stratified: bool = True

    @model_validator(mode="after")
    def _sums_to_one(self):
        fractions = (self.train, self.val, self.test)
        if any(not 0 < f < 1 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
            raise ValueError(f"split fractions must lie in (0, 1) and sum to 1, got {fractions}")
        return self


class SelectionConfig(_Strict):
    k: int = Field(5, ge=1)
    n_estimators: int = Field(100, ge=1)
    study_ks: list[Union[int, Literal["all"]]] = Field(default_factory=lambda: [3, 5, 10, 20, "all"])
    study_repeats: int = Field(3, ge=1)


class PipelineConfig(_Strict):
    schema_version: Literal[1]
    seed: int = 0
    out: Path = Path("out")
    input: InputConfig
    sync: SyncConfig = SyncConfig()
    features: FeatureConfig = FeatureConfig()
    signal: SignalConfig = SignalConfig()
    review: Optional[Path] = None
    split: SplitConfig = SplitConfig()
    selection: SelectionConfig = SelectionConfig()
    models: list[str] = Field(default_factory=lambda: list(MODEL_KINDS))
    threshold_sweep: bool = False

    @field_validator("models")
    @classmethod
    def _known_models(cls, v):
        unknown = [m for m in v if m not in MODEL_KINDS]
        if unknown or not v:
            raise ValueError(f"unknown or empty model list {v}; expected names from {', '.join(MODEL_KINDS)}")
        if len(set(v)) != len(v):
            raise ValueError("duplicate model names")
        return v

    def device_ids(self) -> list[str]:
        if self.input.devices is not None:
            return [d.id for d in self.input.devices]
        return ["waist", "wrist", "ambient"]


def _format(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict, base_dir: Path | None = None) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        cfg = PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format(exc)}") from None
    if base_dir is not None:
        cfg = _resolve_paths(cfg, base_dir)
    return cfg


def _resolve_paths(cfg: PipelineConfig, base: Path) -> PipelineConfig:
    def fix(p):
        return p if p is None or p.is_absolute() else base / p

    updates = {"review": fix(cfg.review)}
    if cfg.input.devices is not None:
        devices = [d.model_copy(update={"path": fix(d.path)}) for d in cfg.input.devices]
        updates["input"] = cfg.input.model_copy(update={"devices": devices})
    return cfg.model_copy(update=updates)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML/JSON: {exc}") from None
    return parse_config(data, path.parent)


def with_overrides(cfg: PipelineConfig, *, seed=None, beta=None, models=None, k=None, out=None,
                   threshold_sweep=None) -> PipelineConfig:
    data = cfg.model_dump()
    if seed is not None:
        data["seed"] = seed
    if beta is not None:
        data["signal"]["beta"] = beta
    if models is not None:
        data["models"] = models
    if k is not None:
        data["selection"]["k"] = k
    if out is not None:
        data["out"] = out
    if threshold_sweep is not None:
        data["threshold_sweep"] = threshold_sweep
    return parse_config(data)
