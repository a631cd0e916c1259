"""Declarative run configuration.

Every hyperparameter lives here with its default, so a resolved config echoed
into a run manifest documents the full setup.  Unknown keys are rejected.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

HORIZONS = (7, 15, 30, 60, 90, 120, 150, 180)
ARCHETYPES = ("processing", "catering", "glass", "heating")


class ConfigError(ValueError):
    """Config file missing, unparsable or failing schema validation."""

    def __init__(self, message: str, problems: list[str] | None = None):
        super().__init__(message)
        self.problems = problems or []


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SyntheticConfig(_Strict):
    n_customers: int = Field(200, ge=1)
    archetypes: list[str] = Field(default_factory=lambda: ["processing", "catering", "glass"])
    archetype_weights: list[float] | None = None
    min_length: int = Field(300, ge=2)
    max_length: int = Field(2355, ge=2)
    unknown_fraction: float = Field(0.1, ge=0.0, le=1.0)
    missing_rate: float = Field(0.01, ge=0.0, lt=0.5)
    malfunction_fraction: float = Field(0.02, ge=0.0, le=1.0)
    start_date: str = "2017-01-01"
    span_days: int = Field(2555, ge=2)

    @field_validator("archetypes")
    @classmethod
    def _known(cls, v):
        bad = [a for a in v if a not in ARCHETYPES]
        if bad:
            raise ValueError(f"unknown archetypes {bad}; choose from {list(ARCHETYPES)}")
        if len(set(v)) < 2:
            raise ValueError("at least two distinct archetypes are required")
        return v

    @model_validator(mode="after")
    def _ranges(self):
        if self.min_length > self.max_length:
            raise ValueError(f"min_length {self.min_length} > max_length {self.max_length}")
        if self.max_length > self.span_days:
            raise ValueError(f"max_length {self.max_length} exceeds span_days {self.span_days}")
        if self.archetype_weights is not None:
            if len(self.archetype_weights) != len(self.archetypes):
                raise ValueError("archetype_weights must match archetypes in length")
            if any(w < 0 for w in self.archetype_weights) or sum(self.archetype_weights) <= 0:
                raise ValueError("archetype_weights must be non-negative with a positive sum")
        return self


class ScreeningConfig(_Strict):
    min_len: int = Field(300, ge=1)
    z_threshold: float = Field(8.0, gt=0)
    max_fraction: float = Field(0.01, ge=0.0, le=1.0)


class SplitConfig(_Strict):
    test_span_days: int = Field(183, ge=1)
    train_val_ratio: tuple[int, int] = (7, 1)
    history_len: int = Field(96, ge=1)


class DataConfig(_Strict):
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    screening: ScreeningConfig = Field(default_factory=ScreeningConfig)
    split: SplitConfig = Field(default_factory=SplitConfig)


class ModelConfig(_Strict):
    patch_len: int = Field(16, ge=1)
    patch_stride: int = Field(8, ge=1)
    model_dim: int = Field(64, ge=2)
    heads: int = Field(4, ge=1)
    encoder_layers: int = Field(3, ge=0)
    decoder_layers: int = Field(1, ge=0)
    feedforward_dim: int = Field(128, ge=1)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    rope_base: float = Field(10000.0, gt=1.0)
    max_horizon: int = Field(180, ge=1)
    revin: bool = False

    @model_validator(mode="after")
    def _geometry(self):
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if (self.model_dim // self.heads) % 2:
            raise ValueError("head_dim must be even for rotary position encoding")
        if self.patch_stride > self.patch_len:
            raise ValueError("patch_stride must not exceed patch_len")
        return self

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


class LossConfig(_Strict):
    tau: float = Field(0.1, gt=0)
    alpha: float = Field(0.1, ge=0.0, lt=1.0)
    beta: float = Field(0.01, gt=0)
    lambda1: float = Field(0.2, ge=0.0)
    lambda2: float = Field(0.2, ge=0.0)
    fn_top_k: int = Field(1, ge=0)
    noise_std_ratio: float = Field(0.1, ge=0.0)
    similarity: Literal["cosine", "dot"] = "cosine"
    denoise_reduction: Literal["mean", "sum"] = "mean"

    @model_validator(mode="after")
    def _weights(self):
        if self.lambda1 + self.lambda2 >= 1.0:
            raise ValueError(f"lambda1 + lambda2 must be < 1 (got {self.lambda1 + self.lambda2})")
        return self


class PretrainConfig(_Strict):
    steps: int = Field(400, ge=0)
    batch_size: int = Field(32, ge=2)
    lr: float = Field(1e-3, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    overlap_ratio: float = Field(0.5, gt=0.0, le=1.0)
    use_cl: bool = True
    use_dn: bool = True
    use_fn: bool = True
    log_every: int = Field(10, ge=1)
    loss: LossConfig = Field(default_factory=LossConfig)


class FinetuneConfig(_Strict):
    horizon: int = 30
    epochs: int = Field(8, ge=0)
    steps_per_epoch: int = Field(50, ge=1)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(1e-3, gt=0)
    patience: int = Field(5, ge=1)
    freeze_encoder: bool = False
    max_val_windows: int = Field(2048, ge=1)
    loss_reduction: Literal["mean", "sum"] = "mean"

    @field_validator("horizon")
    @classmethod
    def _horizon(cls, v):
        if v not in HORIZONS:
            raise ValueError(f"horizon {v} not in {list(HORIZONS)}")
        return v


class EvalConfig(_Strict):
    horizons: list[int] = Field(default_factory=lambda: [30])
    partition_seed: int = 0
    source_part: Literal[0, 1] = 0
    test_stride: int = Field(1, ge=1)
    batch_size: int = Field(1024, ge=1)
    mase_denominator: Literal["target", "insample"] = "target"

    @field_validator("horizons")
    @classmethod
    def _horizons(cls, v):
        bad = [h for h in v if h not in HORIZONS]
        if bad or not v:
            raise ValueError(f"horizons {bad or v} must be a non-empty subset of {list(HORIZONS)}")
        return sorted(set(v))


class RunConfig(_Strict):
    seed: int = 7
    threads: int | None = Field(None, ge=1)
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def _cross(self):
        n = self.data.split.history_len
        if self.model.patch_len > n:
            raise ValueError(f"model.patch_len {self.model.patch_len} exceeds history_len {n}")
        if self.finetune.horizon > self.model.max_horizon:
            raise ValueError("finetune.horizon exceeds model.max_horizon")
        return self

    def snapshot(self) -> dict:
        return self.model_dump(mode="json")


def _format_errors(err: ValidationError) -> list[str]:
    problems = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            problems.append(f"{loc}: unknown key")
        else:
            problems.append(f"{loc}: {e['msg']}")
    return problems


def parse_config(tree: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(tree or {})
    except ValidationError as err:
        problems = _format_errors(err)
        raise ConfigError("invalid config: " + "; ".join(problems), problems) from None


def load_config(path) -> RunConfig:
    """Load and validate a YAML config; an empty file yields all defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        tree = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if tree is not None and not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(tree)


def config_diff(a: RunConfig, b: RunConfig) -> dict[str, tuple]:
    """Flattened {dotted.key: (a_value, b_value)} for every differing leaf."""

    def flat(d, prefix=""):
        out = {}
        for k, v in d.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                out.update(flat(v, key + "."))
            else:
                out[key] = v
        return out

    fa, fb = flat(a.snapshot()), flat(b.snapshot())
    return {k: (fa.get(k), fb.get(k)) for k in sorted(set(fa) | set(fb)) if fa.get(k) != fb.get(k)}
