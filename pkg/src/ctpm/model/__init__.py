"""Continuous treatment policy matching model, objectives and training."""
from .core import (
    Batch,
    BatchWeights,
    CtpmModel,
    DegenerateModelError,
    ate_estimate,
    batch_weights,
    composite_objective,
    effective_sample_size,
    loss_and_ess,
    objective_loss_fn,
)
from .objective import ObjectiveSpec, guard_ratio_denominator, metric_from_effects
from .policy import FAMILIES, mode, policy_density, unnormalized_bell
from .training import RestartHistory, TrainConfig, TrainingError, fit_restarts, train

__all__ = [
    "Batch",
    "BatchWeights",
    "CtpmModel",
    "DegenerateModelError",
    "FAMILIES",
    "ObjectiveSpec",
    "RestartHistory",
    "TrainConfig",
    "TrainingError",
    "ate_estimate",
    "batch_weights",
    "composite_objective",
    "effective_sample_size",
    "fit_restarts",
    "guard_ratio_denominator",
    "loss_and_ess",
    "metric_from_effects",
    "mode",
    "objective_loss_fn",
    "policy_density",
    "train",
    "unnormalized_bell",
]
