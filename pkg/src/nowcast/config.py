"""Pipeline configuration: YAML file -> frozen dataclasses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .models import MODEL_IDS


@dataclass(frozen=True)
class DataConfig:
    manifest: str | None = None
    synthetic: dict | None = None
    target_id: str = "gdp"
    start: str | None = None
    train_end: str | None = None
    test_end: str | None = None


@dataclass(frozen=True)
class SelectionStageConfig:
    n_iterations: int = 50_000
    burn_in: int = 1_000
    prior_inclusion_prob: float = 0.5
    g: float | None = None
    noise_shape: float = 0.0
    noise_scale: float = 0.0
    top_k: int = 10


@dataclass(frozen=True)
class TuningConfig:
    enabled: bool = True
    k_folds: int = 5
    budget: int = 30
    n_initial: int = 8


@dataclass(frozen=True)
class EvaluationConfig:
    refit_each_month: bool = True
    warm_start: bool = True
    small_sample_adjust: bool = True
    test_start: str | None = None
    intercept: bool = False
    baseline: str = "ar"
    dfme: str = "dfm_electricity"


@dataclass(frozen=True)
class ModelConfig:
    id: str
    params: dict = field(default_factory=dict)
    space: dict | None = None
    tune: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig
    models: tuple
    selection: SelectionStageConfig = SelectionStageConfig()
    tuning: TuningConfig = TuningConfig()
    evaluation: EvaluationConfig = EvaluationConfig()
    output_dir: str = "runs/default"
    seed: int = 0

    def model(self, model_id) -> ModelConfig:
        for m in self.models:
            if m.id == model_id:
                return m
        raise KeyError(model_id)

    @property
    def model_ids(self) -> tuple:
        return tuple(m.id for m in self.models)

    def section(self, name) -> dict:
        return asdict(getattr(self, name))


def _build(cls, raw, where):
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = cls.__dataclass_fields__
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return cls(**raw)


def parse_config(raw: dict, base_dir=None) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    allowed = {"data", "models", "selection", "tuning", "evaluation", "output_dir", "seed"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    data = _build(DataConfig, raw.get("data"), "data")
    if (data.manifest is None) == (data.synthetic is None):
        raise ConfigError("data needs exactly one of 'manifest' or 'synthetic'")
    if data.manifest is not None and base_dir is not None and not Path(data.manifest).is_absolute():
        data = DataConfig(**{**asdict(data), "manifest": str(Path(base_dir) / data.manifest)})
    for key in ("start", "train_end", "test_end"):
        value = getattr(data, key)
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"data.{key} must be a 'YYYY-MM' string")

    models_raw = raw.get("models")
    if not models_raw:
        raise ConfigError("config lists no models")
    if isinstance(models_raw, list):
        models_raw = {m: {} for m in models_raw}
    models = []
    for mid, spec in models_raw.items():
        if mid not in MODEL_IDS:
            raise ConfigError(f"unsupported model id {mid!r}; expected one of {MODEL_IDS}")
        models.append(_build(ModelConfig, {"id": mid, **(spec or {})}, f"models.{mid}"))
    seed = int(raw.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    cfg = PipelineConfig(
        data=data, models=tuple(models),
        selection=_build(SelectionStageConfig, raw.get("selection"), "selection"),
        tuning=_build(TuningConfig, raw.get("tuning"), "tuning"),
        evaluation=_build(EvaluationConfig, raw.get("evaluation"), "evaluation"),
        output_dir=str(raw.get("output_dir", "runs/default")), seed=seed,
    )
    if cfg.evaluation.baseline not in cfg.model_ids:
        raise ConfigError(f"baseline model {cfg.evaluation.baseline!r} is not configured")
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    with path.open() as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw, base_dir=path.parent)
