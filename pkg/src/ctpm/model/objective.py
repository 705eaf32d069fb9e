"""Composite objectives over several propensity-weighted treatment effects.

``eq1_maximize``
    maximize ``tau_q * (tau_r - lambda * tau_c)``; the loss is its negative.
``eq2_minimize``
    minimize ``tau_c / tau_r + lambda * tau_m``.

Both are reported so that "higher is better" holds uniformly through
:func:`metric_from_effects`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from ..diffcore import tape

FORMS = ("eq1_maximize", "eq2_minimize")
ROLES = {"eq1_maximize": ("q", "r", "c"), "eq2_minimize": ("r", "c", "m")}
RATIO_FLOOR = 1e-6


@dataclass
class ObjectiveSpec:
    """Which composite to optimize and which outcome columns play each role.

    ``dim_map`` maps the roles ``r``, ``c`` and ``q`` (eq1) or ``m`` (eq2)
    to outcome names in the dataset; missing roles default to their own
    name.
    """

    form: str = "eq1_maximize"
    dim_map: Dict[str, str] = field(default_factory=dict)
    lam: float = 0.1

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown objective form {self.form!r}; expected one of {FORMS}")
        extra = set(self.dim_map) - set(ROLES[self.form])
        if extra:
            raise ValueError(f"roles {sorted(extra)} are not used by {self.form}")
        self.dim_map = {role: self.dim_map.get(role, role) for role in ROLES[self.form]}

    @property
    def roles(self):
        return ROLES[self.form]

    def outcome(self, role: str) -> str:
        return self.dim_map[role]

    @property
    def outcome_names(self):
        return [self.dim_map[r] for r in self.roles]

    def to_dict(self) -> dict:
        return {"form": self.form, "dim_map": dict(self.dim_map), "lambda": self.lam}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ObjectiveSpec":
        data = dict(data)
        unknown = set(data) - {"form", "dim_map", "lambda"}
        if unknown:
            raise ValueError(f"unknown objective keys {sorted(unknown)}")
        return cls(form=data.get("form", "eq1_maximize"), dim_map=dict(data.get("dim_map", {})),
                   lam=float(data.get("lambda", 0.1)))


def guard_ratio_denominator(value: float) -> float:
    """Sign-preserving floor of ``|value|`` at 1e-6 (zero maps to +1e-6)."""
    if abs(value) >= RATIO_FLOOR:
        return value
    return -RATIO_FLOOR if value < 0 else RATIO_FLOOR


def loss_from_effects(spec: ObjectiveSpec, effects: Mapping[str, "tape.Tensor | float"]):
    """Loss (lower is better) from role -> effect; works on floats and tensors."""
    e = effects
    if spec.form == "eq1_maximize":
        return -(e["q"] * (e["r"] - spec.lam * e["c"]))
    r = e["r"]
    denom = tape.sign_floor(r, RATIO_FLOOR) if isinstance(r, tape.Tensor) else guard_ratio_denominator(r)
    return e["c"] / denom + spec.lam * e["m"]


def metric_from_effects(spec: ObjectiveSpec, effects: Mapping[str, float]) -> float:
    """Composite metric with higher-is-better orientation (negated loss)."""
    return -float(loss_from_effects(spec, effects))


def metric_from_arrays(spec: ObjectiveSpec, effects: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorized :func:`metric_from_effects` over arrays of effects."""
    e = effects
    if spec.form == "eq1_maximize":
        return e["q"] * (e["r"] - spec.lam * e["c"])
    r = np.asarray(e["r"], dtype=np.float64)
    denom = np.where(np.abs(r) >= RATIO_FLOOR, r, np.where(r < 0, -RATIO_FLOOR, RATIO_FLOOR))
    return -(e["c"] / denom + spec.lam * e["m"])
