"""Treatment propensity e(x) = P(T = 1 | x) and the overall treated fraction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .dataset import DataError, Dataset

DEFAULT_CLIP = 0.01


def overall_propensity(train: Dataset) -> float:
    """Treated fraction of ``train``."""
    _check_cohorts(train)
    return float(np.mean(train.treatment))


def propensity_features(dataset: Dataset, features: str) -> np.ndarray:
    """``'subject'`` uses x only, ``'pair'`` uses the concatenation [x, y]."""
    if features == "subject":
        return dataset.x
    if features == "pair":
        return dataset.pairs
    raise ValueError(f"unknown propensity feature set {features!r}")


def _check_cohorts(train: Dataset) -> None:
    if len(train) == 0:
        raise DataError("empty training set")
    if not train.has_both_cohorts():
        raise DataError("propensity needs both treated and control records")


@dataclass
class PropensityModel:
    kind: str
    constant_rate: Optional[float] = None
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    bias: float = 0.0
    features: str = "subject"
    clip_epsilon: float = DEFAULT_CLIP

    def _raw(self, feats: np.ndarray) -> np.ndarray:
        feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
        if self.kind == "constant":
            return np.full(len(feats), self.constant_rate)
        if feats.shape[1] != len(self.weights):
            raise ValueError(f"propensity model expects {len(self.weights)} features, got {feats.shape[1]}")
        return expit(feats @ self.weights + self.bias)

    def estimate(self, feats) -> np.ndarray:
        """Clipped propensity for each row of ``feats`` (or a single vector)."""
        out = np.clip(self._raw(feats), self.clip_epsilon, 1.0 - self.clip_epsilon)
        return out[0] if np.ndim(feats) == 1 else out

    def for_dataset(self, dataset: Dataset) -> np.ndarray:
        return self.estimate(propensity_features(dataset, self.features))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "constant_rate": self.constant_rate,
            "weights": None if self.weights is None else self.weights.tolist(),
            "bias": self.bias,
            "features": self.features,
            "clip_epsilon": self.clip_epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PropensityModel":
        data = dict(data)
        if data.get("weights") is not None:
            data["weights"] = np.asarray(data["weights"], dtype=np.float64)
        return cls(**data)


def fit_constant(train: Dataset, clip_epsilon: float = DEFAULT_CLIP, features: str = "subject") -> PropensityModel:
    _check_cohorts(train)
    return PropensityModel("constant", constant_rate=float(np.mean(train.treatment)),
                           features=features, clip_epsilon=clip_epsilon)


def fit_logistic(
    train: Dataset,
    iterations: int = 2000,
    learning_rate: float = 0.5,
    features: str = "subject",
    clip_epsilon: float = DEFAULT_CLIP,
    tol: float = 1e-10,
) -> PropensityModel:
    """Logistic regression of T on the features by full-batch gradient descent."""
    _check_cohorts(train)
    X = propensity_features(train, features)
    t = train.treatment.astype(np.float64)
    n, d = X.shape
    w = np.zeros(d)
    b = float(np.log(t.mean() / (1.0 - t.mean())))
    prev = np.inf
    for _ in range(iterations):
        z = X @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - t * z))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite cross-entropy while fitting the propensity model")
        resid = expit(z) - t
        w -= learning_rate * (X.T @ resid) / n
        b -= learning_rate * float(resid.mean())
        if prev - loss < tol:
            break
        prev = loss
    return PropensityModel("logistic", weights=w, bias=b, features=features, clip_epsilon=clip_epsilon)
