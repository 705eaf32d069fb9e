"""Comparison scorers: random, Simple CT and the R-learner."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from .dataset import DataError, Dataset
from .diffcore import Tensor, tape
from .model.objective import ObjectiveSpec, guard_ratio_denominator
from .model.training import TrainConfig, fit_restarts, prepare_batches
from .propensity import PropensityModel


# ---------------------------------------------------------------------------
# Simple CT: a logistic weight over [x, y] inside the same objective


@dataclass
class SimpleCtModel:
    weights: np.ndarray
    bias: float = 0.0
    propensity: Optional[PropensityModel] = None
    overall_propensity: float = 0.5

    @classmethod
    def zeros(cls, n_features: int, **kwargs) -> "SimpleCtModel":
        return cls(weights=np.zeros(n_features), **kwargs)

    @property
    def n_params(self) -> int:
        return len(self.weights) + 1

    @property
    def params(self) -> np.ndarray:
        return np.append(self.weights, self.bias)

    def set_params(self, flat) -> "SimpleCtModel":
        flat = np.asarray(flat, dtype=np.float64)
        self.weights, self.bias = flat[:-1].copy(), float(flat[-1])
        return self

    def initialize(self, rng: np.random.Generator) -> "SimpleCtModel":
        bound = 1.0 / np.sqrt(len(self.weights))
        self.weights = rng.uniform(-bound, bound, size=len(self.weights))
        self.bias = 0.0
        return self

    def log_weights(self, theta: Tensor, batch) -> Tensor:
        return tape.log_sigmoid(batch.pairs @ theta[:-1] + theta[-1])

    def logit(self, x, y) -> np.ndarray:
        return np.hstack([np.atleast_2d(x), np.atleast_2d(y)]) @ self.weights + self.bias

    def score(self, x, y, P=None) -> np.ndarray:
        return expit(self.logit(x, y))

    def log_score(self, x, y, P=None) -> np.ndarray:
        return -np.logaddexp(0.0, -self.logit(x, y))


def train_simple_ct(
    train_set: Dataset,
    val_set: Dataset,
    spec: ObjectiveSpec,
    config: TrainConfig = TrainConfig(),
    propensity: Optional[PropensityModel] = None,
) -> Tuple[SimpleCtModel, list]:
    """Same restarts, optimizer and objective as the matching model, with
    ``sigmoid(w . [x, y] + b)`` as the only per-record weight."""
    propensity, e_hat, train_batch, val_batch = prepare_batches(train_set, val_set, spec, propensity, config.center_outcomes)
    d = train_set.x.shape[1] + train_set.y.shape[1]

    def make(rng):
        return SimpleCtModel.zeros(d, propensity=propensity, overall_propensity=e_hat).initialize(rng)

    return fit_restarts(make, train_batch, val_batch, spec, config)


# ---------------------------------------------------------------------------
# R-learner with linear base estimators


def _least_squares(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normal equations, falling back to the pseudo-inverse when singular."""
    gram = A.T @ A
    rhs = A.T @ b
    try:
        if np.linalg.cond(gram) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned normal equations")
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(A) @ b


def _design(features: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((len(features), 1)), features])


@dataclass
class LinearEffect:
    """Fitted outcome model ``m(x~)`` and effect model ``tau(x~)`` for one outcome."""

    outcome_coef: np.ndarray
    effect_coef: np.ndarray

    @property
    def intercept(self) -> float:
        return float(self.effect_coef[0])

    @property
    def coef(self) -> np.ndarray:
        return self.effect_coef[1:]

    def effect(self, features: np.ndarray) -> np.ndarray:
        return _design(np.atleast_2d(features)) @ self.effect_coef


def fit_rlearner(train: Dataset, outcome: str, overall: Optional[float] = None) -> LinearEffect:
    """Robinson residual-on-residual regression with a constant propensity.

    ``m`` is the least-squares fit of Y on ``x~ = [x, y]``; ``tau`` minimizes
    ``sum(((Y - m(x~)) - (T - e) * tau(x~))**2)``.  The intensity is not a
    feature.
    """
    if not train.has_both_cohorts():
        raise DataError("R-learner needs both treated and control records")
    train.require_outcomes([outcome])
    feats = _design(train.pairs)
    yv = train.outcomes[outcome]
    e = float(np.mean(train.treatment)) if overall is None else float(overall)
    m_coef = _least_squares(feats, yv)
    resid_y = yv - feats @ m_coef
    resid_t = train.treatment - e
    tau_coef = _least_squares(resid_t[:, None] * feats, resid_y)
    return LinearEffect(outcome_coef=m_coef, effect_coef=tau_coef)


@dataclass
class RLearnerModel:
    spec: ObjectiveSpec
    effects: Dict[str, LinearEffect] = field(default_factory=dict)

    def role_effects(self, x, y) -> Dict[str, np.ndarray]:
        feats = np.hstack([np.atleast_2d(x), np.atleast_2d(y)])
        return {role: self.effects[role].effect(feats) for role in self.spec.roles}

    def score(self, x, y, P=None) -> np.ndarray:
        return combine_effects(self.role_effects(x, y), self.spec)

    log_score = score


def fit_rlearner_model(train: Dataset, spec: ObjectiveSpec) -> RLearnerModel:
    """One R-learner per objective role."""
    return RLearnerModel(spec=spec, effects={role: fit_rlearner(train, spec.outcome(role)) for role in spec.roles})


def combine_effects(effects: Dict[str, np.ndarray], spec: ObjectiveSpec) -> np.ndarray:
    """Per-record composite with higher-is-better orientation.

    eq1: ``tau_q * (tau_r - lambda * tau_c)``; eq2: ``-(tau_c / tau_r + lambda * tau_m)``
    with the sign-preserving 1e-6 floor on ``tau_r``.
    """
    e = {k: np.asarray(v, dtype=np.float64) for k, v in effects.items()}
    if spec.form == "eq1_maximize":
        return e["q"] * (e["r"] - spec.lam * e["c"])
    denom = np.vectorize(guard_ratio_denominator, otypes=[float])(e["r"])
    return -(e["c"] / denom + spec.lam * e["m"])


def rlearner_score(model: RLearnerModel, x, y, spec: Optional[ObjectiveSpec] = None) -> np.ndarray:
    if spec is not None and spec is not model.spec:
        model = RLearnerModel(spec=spec, effects=model.effects)
    return model.score(x, y)


# ---------------------------------------------------------------------------
# random


@dataclass
class RandomScorer:
    """I.i.d. uniform [0, 1) scores; the same seed gives the same scores."""

    seed: int = 0

    def score(self, x, y=None, P=None) -> np.ndarray:
        n = len(np.atleast_2d(x))
        return np.random.default_rng(self.seed).uniform(0.0, 1.0, size=n)

    log_score = score


def random_score(seed: int) -> RandomScorer:
    return RandomScorer(seed)
