"""Full-batch Adam training with random restarts and validation selection."""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..dataset import DataError, Dataset
from ..diffcore import AdamState, NonFiniteError, adam_step, evaluate, value_and_gradient
from ..propensity import PropensityModel, fit_constant, overall_propensity
from .core import Batch, CtpmModel, DegenerateModelError, loss_and_ess, objective_loss_fn
from .objective import ObjectiveSpec

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Every restart diverged."""


@dataclass
class TrainConfig:
    iterations: int = 650
    restarts: int = 6
    learning_rate: float = 0.01
    seed: int = 0
    hidden_units: int = 8
    embedding_dim: int = 8
    policy_family: str = "sigmoid_bell"
    sharpness: float = 1.0
    hidden_activation: str = "tanh"
    # keep the iterate with the lowest validation loss instead of the last one
    keep_best_iteration: bool = True
    # stop a restart after this many iterations without a validation improvement
    patience: Optional[int] = 50
    # iterates whose validation weights have a Kish effective sample size
    # below this fraction of the validation records are not eligible
    min_val_ess_fraction: float = 0.025
    # L2 penalty 0.5 * weight_decay * |theta|^2 added to the training gradient
    weight_decay: float = 0.0
    # subtract the training mean of each outcome before forming the objective
    center_outcomes: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.restarts < 1:
            raise ValueError("iterations and restarts must be positive")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive or None")
        if not 0.0 <= self.min_val_ess_fraction <= 1.0:
            raise ValueError("min_val_ess_fraction must be in [0, 1]")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RestartHistory:
    restart: int
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_ess: List[float] = field(default_factory=list)
    final_train_loss: float = float("inf")
    final_val_loss: float = float("inf")
    best_iteration: int = -1
    status: str = "ok"
    message: str = ""
    selected: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def fit_restarts(
    make_model: Callable[[np.random.Generator], object],
    train_batch: Batch,
    val_batch: Batch,
    spec: ObjectiveSpec,
    config: TrainConfig,
) -> Tuple[object, List[RestartHistory]]:
    """Train ``config.restarts`` freshly initialized models; keep the best on validation.

    ``make_model`` receives a generator seeded with ``(config.seed, restart)``.
    Within a restart the iterate with the lowest validation loss is kept (or
    the last one when ``keep_best_iteration`` is off), among iterates whose
    validation effective sample size clears the floor.  A restart whose loss
    or gradient turns non-finite is abandoned and logged.
    """
    min_ess = config.min_val_ess_fraction * len(val_batch)
    best, best_val = None, float("inf")
    histories = []
    for r in range(config.restarts):
        model = make_model(np.random.default_rng([config.seed, r]))
        hist = RestartHistory(restart=r)
        try:
            train_loss = objective_loss_fn(model, train_batch, spec)
            params = model.params
            state = AdamState(size=params.size, learning_rate=config.learning_rate)
            kept, kept_val, since = params, float("inf"), 0
            for i in range(config.iterations + 1):
                v, ess = loss_and_ess(model, params, val_batch, spec)
                if i == config.iterations:
                    # the final iterate is a candidate but takes no step
                    if v < kept_val and ess >= min_ess or not config.keep_best_iteration:
                        kept, kept_val, hist.best_iteration = params, v, i
                    break
                loss, grad = value_and_gradient(train_loss, params)
                hist.train_loss.append(loss)
                hist.val_loss.append(v)
                hist.val_ess.append(ess)
                if v < kept_val and ess >= min_ess:
                    kept, kept_val, hist.best_iteration, since = params, v, i, 0
                else:
                    since += 1
                if config.patience is not None and since >= config.patience:
                    hist.status = "early_stopped"
                    break
                params, state = adam_step(params, grad + config.weight_decay * params, state)
            if hist.best_iteration < 0:
                hist.message = "no iterate cleared the validation sample-size floor; kept the initialization"
                hist.best_iteration = 0
            model.set_params(kept)
            hist.final_train_loss = evaluate(train_loss, kept)
            hist.final_val_loss = loss_and_ess(model, kept, val_batch, spec)[0]
        except (NonFiniteError, DegenerateModelError, FloatingPointError) as exc:
            hist.status, hist.message = "aborted", str(exc)
            hist.final_val_loss = float("inf")
            log.warning("restart %d aborted: %s", r, exc)
        histories.append(hist)
        if hist.final_val_loss < best_val:
            best, best_val = model, hist.final_val_loss
        log.info("restart %d: status=%s val_loss=%.6g", r, hist.status, hist.final_val_loss)
    if best is None:
        raise TrainingError("all restarts aborted")
    for h in histories:
        h.selected = h.final_val_loss == best_val and h.status != "aborted"
        if h.selected:
            break
    return best, histories


def _check_splits(train_set: Dataset, val_set: Dataset, spec: ObjectiveSpec) -> None:
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("training and validation splits must be nonempty")
    if not train_set.has_both_cohorts() or not val_set.has_both_cohorts():
        raise DataError("training and validation splits need both cohorts")
    train_set.require_outcomes(spec.outcome_names)
    val_set.require_outcomes(spec.outcome_names)


def outcome_offsets(train_set: Dataset, spec: ObjectiveSpec, center: bool = True) -> dict:
    """Training means of the objective's outcomes (zeros when ``center`` is off).

    The weighted effect estimate is not invariant to a constant shift of Y
    once the weights favor one cohort, so centering removes the outcome level
    from the training signal.
    """
    return {name: float(np.mean(train_set.outcomes[name])) if center else 0.0 for name in spec.outcome_names}


def prepare_batches(train_set, val_set, spec, propensity: Optional[PropensityModel] = None, center: bool = True):
    """Propensity model (constant by default), overall propensity and the two batches."""
    _check_splits(train_set, val_set, spec)
    propensity = propensity or fit_constant(train_set)
    e_hat = overall_propensity(train_set)
    offsets = outcome_offsets(train_set, spec, center)
    return (
        propensity,
        e_hat,
        Batch.from_dataset(train_set, propensity, e_hat, offsets),
        Batch.from_dataset(val_set, propensity, e_hat, offsets),
    )


def train(
    train_set: Dataset,
    val_set: Dataset,
    spec: ObjectiveSpec,
    config: TrainConfig = TrainConfig(),
    propensity: Optional[PropensityModel] = None,
) -> Tuple[CtpmModel, List[RestartHistory]]:
    """Fit the matching model on the full training batch.

    Returns the restart with the best final validation loss together with the
    per-iteration loss traces of every restart.
    """
    propensity, e_hat, train_batch, val_batch = prepare_batches(train_set, val_set, spec, propensity, config.center_outcomes)

    def make(rng):
        model = CtpmModel.create(
            train_set.x.shape[1],
            train_set.y.shape[1],
            hidden_units=config.hidden_units,
            embedding_dim=config.embedding_dim,
            policy_family=config.policy_family,
            hidden_activation=config.hidden_activation,
            sharpness=config.sharpness,
            propensity=propensity,
            overall_propensity=e_hat,
        )
        return model.initialize(rng)

    return fit_restarts(make, train_batch, val_batch, spec, config)


def clone(model):
    return copy.deepcopy(model)
