"""Adam, gradients of scalar graphs, and a finite-difference checker."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tape
from .tape import NonFiniteError, Tensor

LossFn = Callable[[Tensor], Tensor]


@dataclass
class AdamState:
    size: int
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray = field(default=None, repr=False)
    second_moment: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.size)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.size)
        if len(self.first_moment) != self.size or len(self.second_moment) != self.size:
            raise ValueError("moment vectors must match the parameter length")


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam update.

    Returns the new parameter vector and a new state; the inputs are not
    modified.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != (state.size,):
        raise ValueError("params, grads and optimizer state must have the same length")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NonFiniteError(f"non-finite gradient at coordinate {bad}")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        size=state.size,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        step_count=t,
        first_moment=m,
        second_moment=v,
    )
    return new_params, new_state


def value_and_gradient(loss_fn: LossFn, params: np.ndarray):
    theta = Tensor(np.asarray(params, dtype=np.float64).copy(), needs_grad=True)
    loss = loss_fn(theta)
    if loss.value.size != 1:
        raise ValueError("loss must be a scalar")
    tape.backprop(loss)
    grad = theta.grad if theta.grad is not None else np.zeros_like(theta.value)
    return float(loss.value), grad


def gradient(loss_fn: LossFn, params: np.ndarray) -> np.ndarray:
    """d loss / d params for a loss built from :mod:`ctpm.diffcore.tape` operations."""
    return value_and_gradient(loss_fn, params)[1]


def evaluate(loss_fn: LossFn, params: np.ndarray) -> float:
    return float(loss_fn(Tensor(np.asarray(params, dtype=np.float64))).value)


def finite_diff_check(loss_fn: LossFn, params: np.ndarray, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    if h <= 0:
        raise ValueError("step h must be positive")
    params = np.asarray(params, dtype=np.float64)
    analytic = gradient(loss_fn, params)
    worst = 0.0
    for i in range(params.size):
        up = params.copy()
        down = params.copy()
        up[i] += h
        down[i] -= h
        numeric = (evaluate(loss_fn, up) - evaluate(loss_fn, down)) / (2.0 * h)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst
