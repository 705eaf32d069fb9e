"""Experiment configuration: one YAML file describes data, model, training and evaluation.

Every section is a dataclass; unknown keys anywhere are rejected before any
work starts.  The canonical form of a config (defaults filled in, keys
sorted) is hashed to name the run directory, so the same config always
writes to the same place.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import yaml

from .dataset import SyntheticConfig, TableSchema
from .model import ObjectiveSpec, TrainConfig
from .model.policy import FAMILIES


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class TableSource:
    path: str
    schema: Dict[str, Any]

    def table_schema(self) -> TableSchema:
        try:
            return TableSchema.from_dict(self.schema)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"data.table.schema: {exc}") from None


@dataclass
class DataConfig:
    synthetic: Optional[Dict[str, Any]] = None
    table: Optional[Dict[str, Any]] = None
    # keep this fraction of the sessions (uniformly, before splitting); no re-weighting
    subsample: Optional[float] = None

    def synthetic_config(self, seed: int) -> SyntheticConfig:
        data = dict(self.synthetic or {})
        data.setdefault("seed", seed)
        return _strict(SyntheticConfig, data, "data.synthetic")

    def table_source(self) -> TableSource:
        return _strict(TableSource, self.table, "data.table")


@dataclass
class SplitConfig:
    ratios: List[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])
    seed: Optional[int] = None


@dataclass
class ModelConfig:
    hidden_units: int = 8
    embedding_dim: int = 8
    policy_family: str = "sigmoid_bell"
    sharpness: float = 1.0
    hidden_activation: str = "tanh"


@dataclass
class TrainingConfig:
    iterations: int = 650
    restarts: int = 6
    learning_rate: float = 0.01
    keep_best_iteration: bool = True
    patience: Optional[int] = 50
    min_val_ess_fraction: float = 0.025
    weight_decay: float = 0.0
    center_outcomes: bool = True


@dataclass
class PropensityConfig:
    kind: str = "constant"
    features: str = "subject"
    clip_epsilon: float = 0.01
    iterations: int = 2000
    learning_rate: float = 0.5


@dataclass
class BaselineConfig:
    simple_ct: bool = True
    rlearner: bool = True


@dataclass
class EvaluationConfig:
    grid_step: float = 0.05
    # seed of the shuffle that breaks score ties
    tie_seed: int = 0
    random_seed: int = 0
    score_intensity: str = "observed"
    svg: bool = True
    export_embeddings: bool = True


@dataclass
class OutputConfig:
    directory: str = "runs"


@dataclass
class ExperimentConfig:
    data: DataConfig
    objective: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    propensity: PropensityConfig = field(default_factory=PropensityConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    # directory the config file was read from; relative paths resolve against it
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    # derived views ---------------------------------------------------------

    @property
    def split_seed(self) -> int:
        return self.seed if self.split.seed is None else self.split.seed

    def objective_spec(self) -> ObjectiveSpec:
        try:
            return ObjectiveSpec.from_dict(self.objective)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"objective: {exc}") from None

    def train_config(self) -> TrainConfig:
        t, m = self.training, self.model
        return TrainConfig(
            iterations=t.iterations,
            restarts=t.restarts,
            learning_rate=t.learning_rate,
            seed=self.seed,
            hidden_units=m.hidden_units,
            embedding_dim=m.embedding_dim,
            policy_family=m.policy_family,
            sharpness=m.sharpness,
            hidden_activation=m.hidden_activation,
            keep_best_iteration=t.keep_best_iteration,
            patience=t.patience,
            min_val_ess_fraction=t.min_val_ess_fraction,
            weight_decay=t.weight_decay,
            center_outcomes=t.center_outcomes,
        )

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def canonical(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("base_dir")
        return out

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def run_dir(self) -> Path:
        return self.resolve(self.output.directory) / f"run-{self.digest()[:12]}"


def _strict(cls, data, where: str):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTIONS = {
    "data": DataConfig,
    "split": SplitConfig,
    "model": ModelConfig,
    "training": TrainingConfig,
    "propensity": PropensityConfig,
    "baselines": BaselineConfig,
    "evaluation": EvaluationConfig,
    "output": OutputConfig,
}


def config_from_dict(data: Mapping, base_dir=".") -> ExperimentConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a mapping at the top level")
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"base_dir"}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    if "data" not in data:
        raise ConfigError("missing required section 'data'")
    kwargs = {name: _strict(cls, data.get(name), name) for name, cls in _SECTIONS.items() if name in data}
    for key in ("objective", "seed"):
        if key in data:
            kwargs[key] = data[key]
    cfg = ExperimentConfig(**kwargs, base_dir=Path(base_dir))
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return config_from_dict(data or {}, base_dir=path.parent)


def validate(cfg: ExperimentConfig) -> None:
    """Cross-field checks; raises :class:`ConfigError` on the first problem."""
    d = cfg.data
    if (d.synthetic is None) == (d.table is None):
        raise ConfigError("data: give exactly one of 'synthetic' or 'table'")
    if d.synthetic is not None:
        d.synthetic_config(cfg.seed)
    else:
        d.table_source().table_schema()
    if d.subsample is not None and not 0.0 < d.subsample <= 1.0:
        raise ConfigError("data.subsample must be in (0, 1]")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError("seed must be an integer")
    r = cfg.split.ratios
    if len(r) != 3 or min(r) <= 0 or abs(sum(r) - 1.0) > 1e-9:
        raise ConfigError("split.ratios must be three positive numbers summing to 1")
    spec = cfg.objective_spec()
    if cfg.model.policy_family not in FAMILIES:
        raise ConfigError(f"model.policy_family must be one of {FAMILIES}")
    if cfg.model.hidden_units < 1 or cfg.model.embedding_dim < 1:
        raise ConfigError("model.hidden_units and model.embedding_dim must be positive")
    if cfg.model.sharpness <= 0:
        raise ConfigError("model.sharpness must be positive")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(f"training: {exc}") from None
    p = cfg.propensity
    if p.kind not in ("constant", "logistic"):
        raise ConfigError("propensity.kind must be 'constant' or 'logistic'")
    if p.features not in ("subject", "pair"):
        raise ConfigError("propensity.features must be 'subject' or 'pair'")
    if not 0.0 <= p.clip_epsilon < 0.5:
        raise ConfigError("propensity.clip_epsilon must be in [0, 0.5)")
    e = cfg.evaluation
    if not 0.0 < e.grid_step <= 1.0:
        raise ConfigError("evaluation.grid_step must be in (0, 1]")
    if e.score_intensity not in ("observed", "optimal"):
        raise ConfigError("evaluation.score_intensity must be 'observed' or 'optimal'")
    if spec.form not in ("eq1_maximize", "eq2_minimize"):
        raise ConfigError("objective.form is invalid")
