"""Continuous treatment-intensity densities on [0, 1].

Two families are supported:

``sigmoid_bell``
    density proportional to ``sigmoid(u) * (1 - sigmoid(u))`` with
    ``u = k * (P - s)``, renormalized on [0, 1] through the closed-form
    antiderivative ``sigmoid(u) / k``.  ``s`` is the location (peak) and
    ``k`` the sharpness.
``beta``
    the Beta(alpha, beta) density; the policy network constrains both
    parameters above 1 so the density is unimodal.
"""
from __future__ import annotations

import numpy as np
from scipy import special
from scipy.stats import beta as beta_dist

from ..diffcore import tape

FAMILIES = ("sigmoid_bell", "beta")

# Beta log-densities are evaluated on [eps, 1 - eps] so that weights stay
# strictly positive for intensities logged exactly at 0 or 1.
BETA_EDGE_EPS = 1e-6


def check_family(family: str) -> str:
    if family not in FAMILIES:
        raise ValueError(f"unknown policy family {family!r}; expected one of {FAMILIES}")
    return family


def n_policy_outputs(family: str) -> int:
    return 1 if check_family(family) == "sigmoid_bell" else 2


def _check_intensity(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if np.any((P < 0) | (P > 1)) or not np.all(np.isfinite(P)):
        raise ValueError("intensity must lie in [0, 1]")
    return P


def unnormalized_bell(P, location, sharpness: float = 1.0) -> np.ndarray:
    s = special.expit(sharpness * (np.asarray(P, dtype=np.float64) - location))
    return s * (1.0 - s)


def bell_mass(location, sharpness: float = 1.0) -> np.ndarray:
    """Integral of the unnormalized bell over [0, 1]."""
    return (special.expit(sharpness * (1.0 - location)) - special.expit(-sharpness * location)) / sharpness


def policy_density(family: str, params, P, sharpness: float = 1.0) -> np.ndarray:
    """Density of intensity ``P`` under the per-match distribution.

    ``params`` is the location ``s`` for ``sigmoid_bell`` and an
    ``(..., 2)`` array of ``(alpha, beta)`` for ``beta``.
    """
    P = _check_intensity(P)
    params = np.asarray(params, dtype=np.float64)
    if check_family(family) == "sigmoid_bell":
        return unnormalized_bell(P, params, sharpness) / bell_mass(params, sharpness)
    return beta_dist.pdf(P, params[..., 0], params[..., 1])


def log_density_tensor(family: str, params: tape.Tensor, P: np.ndarray, sharpness: float = 1.0) -> tape.Tensor:
    """Differentiable log-density; ``params`` has shape (N, 1) or (N, 2)."""
    P = np.asarray(P, dtype=np.float64)
    if family == "sigmoid_bell":
        s = params[:, 0]
        u = (P - s) * sharpness
        mass = tape.sigmoid((1.0 - s) * sharpness) - tape.sigmoid(s * (-sharpness))
        return tape.log_sigmoid(u) + tape.log_sigmoid(-u) - tape.log(mass) + float(np.log(sharpness))
    if family == "beta":
        a, b = params[:, 0], params[:, 1]
        Pc = np.clip(P, BETA_EDGE_EPS, 1.0 - BETA_EDGE_EPS)
        return (
            (a - 1.0) * np.log(Pc)
            + (b - 1.0) * np.log1p(-Pc)
            + tape.gammaln(a + b)
            - tape.gammaln(a)
            - tape.gammaln(b)
        )
    raise ValueError(f"unknown policy family {family!r}")


def mode(family: str, params) -> np.ndarray:
    """Intensity at which the density peaks.

    For ``beta`` this is the exact mode ``(alpha - 1) / (alpha + beta - 2)``
    (valid for alpha, beta > 1), not the mean ``alpha / (alpha + beta)``.
    """
    params = np.asarray(params, dtype=np.float64)
    if check_family(family) == "sigmoid_bell":
        return params
    a, b = params[..., 0], params[..., 1]
    return (a - 1.0) / (a + b - 2.0)
