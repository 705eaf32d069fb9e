"""Library-level experiment pipeline shared by the command line and the demos.

    cfg = load_config("configs/synthetic_benchmark.yaml")
    splits = prepare_splits(cfg)
    fitted = train_models(cfg, splits)
    report = evaluate_models(cfg, fitted.models, splits.test, fitted.propensity)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from .baselines import RandomScorer, RLearnerModel, SimpleCtModel, fit_rlearner_model, train_simple_ct
from .config import ExperimentConfig
from .dataset import (
    Dataset,
    NormalizationStats,
    SyntheticGroundTruth,
    apply_normalizer,
    assign_treatment_by_median,
    fit_normalizer,
    generate_synthetic,
    load_table,
    split_indices,
)
from .evaluation import Report, coverage_grid, evaluate_all
from .model import CtpmModel, RestartHistory, train
from .propensity import PropensityModel, fit_constant, fit_logistic

log = logging.getLogger(__name__)


@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset
    stats: NormalizationStats
    # row indices into the loaded (and subsampled) dataset
    index: Dict[str, np.ndarray]
    truth: Optional[SyntheticGroundTruth] = None

    def truth_for(self, name: str) -> Optional[SyntheticGroundTruth]:
        return None if self.truth is None else self.truth.subset(self.index[name])


@dataclass
class FittedModels:
    models: Dict[str, object]
    propensity: PropensityModel
    histories: Dict[str, List[RestartHistory]] = field(default_factory=dict)


def load_dataset(cfg: ExperimentConfig):
    """The full dataset named by the config and its ground truth (synthetic only)."""
    truth = None
    if cfg.data.synthetic is not None:
        ds, truth = generate_synthetic(cfg.data.synthetic_config(cfg.seed))
    else:
        src = cfg.data.table_source()
        ds = load_table(cfg.resolve(src.path), src.table_schema(), seed=cfg.seed)
    if cfg.data.subsample is not None and cfg.data.subsample < 1.0:
        rng = np.random.default_rng([cfg.seed, 1])
        keep = np.sort(rng.permutation(len(ds))[: max(1, int(round(cfg.data.subsample * len(ds))))])
        ds = ds.subset(keep)
        truth = truth.subset(keep) if truth is not None else None
    return ds, truth


def prepare_splits(cfg: ExperimentConfig, dataset: Optional[Dataset] = None,
                   truth: Optional[SyntheticGroundTruth] = None,
                   stats: Optional[NormalizationStats] = None) -> Splits:
    """Split, derive median-based treatment when the table has none, normalize.

    The normalizer is fitted on the training split unless ``stats`` (e.g. from
    a checkpoint) is given.
    """
    if dataset is None:
        dataset, truth = load_dataset(cfg)
    idx = dict(zip(("train", "val", "test"), split_indices(len(dataset), cfg.split.ratios, cfg.split_seed)))
    parts = [dataset.subset(idx[k]) for k in ("train", "val", "test")]
    if cfg.data.table is not None and cfg.data.table_source().table_schema().treatment is None:
        parts = list(assign_treatment_by_median(*parts))
    stats = fit_normalizer(parts[0]) if stats is None else stats
    train_set, val_set, test_set = (apply_normalizer(stats, d) for d in parts)
    return Splits(train_set, val_set, test_set, stats, idx, truth)


def fit_propensity(cfg: ExperimentConfig, train_set: Dataset) -> PropensityModel:
    p = cfg.propensity
    if p.kind == "constant":
        return fit_constant(train_set, clip_epsilon=p.clip_epsilon, features=p.features)
    return fit_logistic(train_set, iterations=p.iterations, learning_rate=p.learning_rate,
                        features=p.features, clip_epsilon=p.clip_epsilon)


def train_models(cfg: ExperimentConfig, splits: Splits) -> FittedModels:
    """CTPM plus the enabled baselines, all on the same splits and propensity."""
    spec = cfg.objective_spec()
    tcfg = cfg.train_config()
    propensity = fit_propensity(cfg, splits.train)
    models, histories = {}, {}
    log.info("training ctpm (%d restarts x %d iterations)", tcfg.restarts, tcfg.iterations)
    models["ctpm"], histories["ctpm"] = train(splits.train, splits.val, spec, tcfg, propensity)
    if cfg.baselines.simple_ct:
        log.info("training simple_ct")
        models["simple_ct"], histories["simple_ct"] = train_simple_ct(splits.train, splits.val, spec, tcfg, propensity)
    if cfg.baselines.rlearner:
        models["rlearner"] = fit_rlearner_model(splits.train, spec)
    return FittedModels(models, propensity, histories)


def score_dataset(model, dataset: Dataset, at: str = "observed") -> np.ndarray:
    """Ranking scores (log scale where the model has one) for every record."""
    if isinstance(model, CtpmModel):
        return model.log_score(dataset.x, dataset.y, dataset.intensity, at=at)
    if isinstance(model, SimpleCtModel):
        return model.log_score(dataset.x, dataset.y)
    if isinstance(model, RLearnerModel):
        return model.score(dataset.x, dataset.y)
    return model.score(dataset.x, dataset.y, dataset.intensity)


def evaluate_models(cfg: ExperimentConfig, models: Mapping[str, object], test_set: Dataset,
                    propensity: PropensityModel) -> Report:
    """Report over ``models`` plus the random baseline, sorted by a-AUC."""
    spec = cfg.objective_spec()
    e = cfg.evaluation
    scores = {name: score_dataset(m, test_set, e.score_intensity) for name, m in models.items()}
    if "random" not in scores:
        scores["random"] = RandomScorer(e.random_seed).score(test_set.x)
    return evaluate_all(scores, test_set, spec, propensity.for_dataset(test_set),
                        grid=coverage_grid(e.grid_step), seed=e.tie_seed)
