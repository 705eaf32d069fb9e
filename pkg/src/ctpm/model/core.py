"""The matching model with a continuous treatment policy.

Each session ``m`` (subject ``x``, candidate ``y``, logged intensity ``P``)
gets an un-normalized weight

    w_m = g(x) * h(x, y) * p_D(P | x, y)

where ``g`` is a sigmoid subject prior, ``h = 1 + cos(f_sp(x), f_cp(y))`` a
bipartite-embedding affinity and ``p_D`` the policy density.  Normalizing the
weights over a batch gives the posterior used in the propensity-weighted
treatment-effect estimate

    tau = e_hat * sum_{T=1} w~ Y / e  -  (1 - e_hat) * sum_{T=0} w~ Y / (1 - e).

All weights are handled in log space; the partition function is a
log-sum-exp.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np
from scipy.special import logsumexp

from ..dataset import DataError, Dataset
from ..diffcore import DenseNet, Tensor, tape
from ..propensity import PropensityModel
from . import policy
from .objective import ObjectiveSpec, loss_from_effects

MIN_PARTITION = 1e-300
NORM_FLOOR = 1e-8
AFFINITY_NORM_MIN = 1e-12


class DegenerateModelError(FloatingPointError):
    """The partition function underflowed."""


@dataclass
class Batch:
    """Constant arrays a loss needs, precomputed once per split."""

    x: np.ndarray
    y: np.ndarray
    intensity: np.ndarray
    treatment: np.ndarray
    propensity: np.ndarray
    overall_propensity: float
    outcomes: Dict[str, np.ndarray]

    @property
    def pairs(self) -> np.ndarray:
        return np.hstack([self.x, self.y])

    def __len__(self) -> int:
        return len(self.treatment)

    @classmethod
    def from_dataset(cls, dataset: Dataset, propensity: PropensityModel, overall: float,
                     offsets: Optional[Mapping[str, float]] = None) -> "Batch":
        """Batch view of ``dataset``; ``offsets`` are subtracted from the named outcomes."""
        offsets = offsets or {}
        return cls(
            x=dataset.x,
            y=dataset.y,
            intensity=dataset.intensity,
            treatment=dataset.treatment,
            propensity=propensity.for_dataset(dataset),
            overall_propensity=float(overall),
            outcomes={k: v - offsets.get(k, 0.0) for k, v in dataset.outcomes.items()},
        )

    def has_both_cohorts(self) -> bool:
        return bool(np.any(self.treatment == 1) and np.any(self.treatment == 0))

    def effect_coefficients(self, outcome: str) -> np.ndarray:
        """Per-record factor multiplying the normalized weight in the ATE sum."""
        if outcome not in self.outcomes:
            raise DataError(f"batch has no outcome {outcome!r}")
        t, e, eh = self.treatment, self.propensity, self.overall_propensity
        y = self.outcomes[outcome]
        return np.where(t == 1, eh * y / e, -(1.0 - eh) * y / (1.0 - e))


@dataclass
class BatchWeights:
    raw: np.ndarray
    z_prior: float
    z_policy: float
    normalized: np.ndarray

    @property
    def partition(self) -> float:
        return self.z_prior * self.z_policy


@dataclass
class CtpmModel:
    g_net: DenseNet
    f_sp: DenseNet
    f_cp: DenseNet
    policy_net: DenseNet
    policy_family: str = "sigmoid_bell"
    propensity: Optional[PropensityModel] = None
    overall_propensity: float = 0.5
    sharpness: float = 1.0

    NET_NAMES = ("g_net", "f_sp", "f_cp", "policy_net")

    def __post_init__(self):
        policy.check_family(self.policy_family)
        if self.f_sp.output_dim != self.f_cp.output_dim:
            raise ValueError("subject and candidate embeddings must share a dimension")
        if self.policy_net.output_dim != policy.n_policy_outputs(self.policy_family):
            raise ValueError("policy network arity does not match the policy family")
        if self.g_net.output_activation != "sigmoid" or self.g_net.output_dim != 1:
            raise ValueError("subject prior must be a scalar sigmoid network")
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")

    @classmethod
    def create(
        cls,
        subject_dim: int,
        candidate_dim: int,
        hidden_units: int = 8,
        embedding_dim: int = 8,
        policy_family: str = "sigmoid_bell",
        hidden_activation: str = "tanh",
        sharpness: float = 1.0,
        propensity: Optional[PropensityModel] = None,
        overall_propensity: float = 0.5,
    ) -> "CtpmModel":
        """Zero-initialized model; call :meth:`initialize` for random weights."""
        h, act = hidden_units, hidden_activation
        out_act = "sigmoid" if policy_family == "sigmoid_bell" else "softplus-shifted"
        return cls(
            g_net=DenseNet((subject_dim, h, 1), act, "sigmoid"),
            f_sp=DenseNet((subject_dim, h, embedding_dim), act, "identity"),
            f_cp=DenseNet((candidate_dim, h, embedding_dim), act, "identity"),
            policy_net=DenseNet((subject_dim + candidate_dim, h, policy.n_policy_outputs(policy_family)), act, out_act),
            policy_family=policy_family,
            propensity=propensity,
            overall_propensity=overall_propensity,
            sharpness=sharpness,
        )

    # parameters --------------------------------------------------------------

    @property
    def nets(self):
        return [getattr(self, name) for name in self.NET_NAMES]

    @property
    def n_params(self) -> int:
        return sum(net.n_params for net in self.nets)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([net.params for net in self.nets])

    def set_params(self, flat: np.ndarray) -> "CtpmModel":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        pos = 0
        for net in self.nets:
            net.params = flat[pos : pos + net.n_params].copy()
            pos += net.n_params
        return self

    def initialize(self, rng: np.random.Generator) -> "CtpmModel":
        for net in self.nets:
            net.initialize(rng)
        return self

    def _slices(self, theta: Tensor):
        out, pos = {}, 0
        for name, net in zip(self.NET_NAMES, self.nets):
            out[name] = theta[pos : pos + net.n_params]
            pos += net.n_params
        return out

    # graph pieces ------------------------------------------------------------

    def _log_prior(self, sl, x) -> Tensor:
        return tape.log_sigmoid(self.g_net.pre_output(x, sl["g_net"]))[:, 0]

    def _cosine(self, sl, x, y) -> Tensor:
        es = self.f_sp.apply(x, sl["f_sp"])
        ec = self.f_cp.apply(y, sl["f_cp"])
        dot = (es * ec).sum(axis=1)
        sq = (es * es).sum(axis=1) * (ec * ec).sum(axis=1)
        return dot / tape.sqrt(tape.maximum(sq, NORM_FLOOR**2))

    def _policy_params(self, sl, x, y) -> Tensor:
        return self.policy_net.apply(np.hstack([x, y]), sl["policy_net"])

    def log_weights(self, theta: Tensor, batch: Batch) -> Tensor:
        """log(g * h * p_D) for every record of ``batch``."""
        sl = self._slices(theta)
        log_h = tape.log(1.0 + self._cosine(sl, batch.x, batch.y))
        log_p = policy.log_density_tensor(
            self.policy_family, self._policy_params(sl, batch.x, batch.y), batch.intensity, self.sharpness
        )
        return self._log_prior(sl, batch.x) + log_h + log_p

    # per-record quantities (plain arrays) -------------------------------------

    def subject_prior(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return self.g_net.apply(x).value[:, 0]

    def embeddings(self, x, y):
        return self.f_sp.apply(np.atleast_2d(x)).value, self.f_cp.apply(np.atleast_2d(y)).value

    def match_affinity(self, x, y) -> np.ndarray:
        """``1 + cos`` of the subject and candidate embeddings, in [0, 2]."""
        es, ec = self.embeddings(x, y)
        ns, nc = np.linalg.norm(es, axis=1), np.linalg.norm(ec, axis=1)
        if np.any(ns < AFFINITY_NORM_MIN) or np.any(nc < AFFINITY_NORM_MIN):
            raise ValueError("embedding norm below 1e-12: cosine similarity undefined")
        cos = np.sum(es * ec, axis=1) / (ns * nc)
        return 1.0 + np.clip(cos, -1.0, 1.0)

    def policy_params(self, x, y) -> np.ndarray:
        """Location ``s`` (shape (N,)) or ``(alpha, beta)`` (shape (N, 2))."""
        out = self.policy_net.apply(np.hstack([np.atleast_2d(x), np.atleast_2d(y)])).value
        return out[:, 0] if self.policy_family == "sigmoid_bell" else out

    def policy_density(self, x, y, P) -> np.ndarray:
        return policy.policy_density(self.policy_family, self.policy_params(x, y), P, self.sharpness)

    def optimal_intensity(self, x, y) -> np.ndarray:
        return np.clip(policy.mode(self.policy_family, self.policy_params(x, y)), 0.0, 1.0)

    def log_score(self, x, y, P=None, at: str = "observed") -> np.ndarray:
        """log of :meth:`score`.

        ``at="observed"`` evaluates the density at the logged intensity ``P``;
        ``at="optimal"`` evaluates it at the predicted optimal intensity.
        """
        if at == "optimal":
            P = self.optimal_intensity(x, y)
        elif at != "observed":
            raise ValueError(f"unknown scoring intensity {at!r}")
        elif P is None:
            raise ValueError("observed-intensity scoring needs P")
        return self.log_weights(Tensor(self.params), _scoring_batch(x, y, P)).value

    def score(self, x, y, P=None, at: str = "observed") -> np.ndarray:
        """Un-normalized effectiveness ``g * h * p_D`` of each session."""
        return np.exp(self.log_score(x, y, P, at))


def _scoring_batch(x, y, P) -> Batch:
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    n = len(x)
    return Batch(x=x, y=y, intensity=np.broadcast_to(np.asarray(P, dtype=np.float64), (n,)),
                 treatment=np.zeros(n, dtype=np.int64), propensity=np.full(n, 0.5),
                 overall_propensity=0.5, outcomes={})


# ---------------------------------------------------------------------------
# weights, effects and objectives (shared by every weight model)


def normalized_weights(log_w: Tensor) -> Tensor:
    log_z = tape.logsumexp(log_w)
    if float(log_z.value) < np.log(MIN_PARTITION):
        raise DegenerateModelError("partition function below 1e-300")
    return tape.exp(log_w - log_z)


def batch_weights(model, batch: Batch) -> BatchWeights:
    """Un-normalized weights, the two partition values and the posterior weights.

    The prior partition sums ``g * h`` and the policy partition sums the
    prior-normalized weights times the density, so their product is the sum
    of the raw weights.
    """
    if len(batch) == 0:
        raise DataError("empty batch")
    log_w = model.log_weights(Tensor(model.params), batch).value
    raw = np.exp(log_w)
    z = float(np.sum(raw))
    if not z >= MIN_PARTITION:
        raise DegenerateModelError("partition function below 1e-300")
    normalized = normalized_weights(Tensor(log_w)).value
    if isinstance(model, CtpmModel):
        prior = model.subject_prior(batch.x) * model.match_affinity(batch.x, batch.y)
        z_prior = float(prior.sum())
        z_policy = z / z_prior
    else:
        z_prior, z_policy = z, 1.0
    return BatchWeights(raw=raw, z_prior=z_prior, z_policy=z_policy, normalized=normalized)


def _require_cohorts(batch: Batch) -> None:
    if not batch.has_both_cohorts():
        raise DataError("treatment-effect estimate needs both treated and control records")


def effects_tensor(weights: Tensor, batch: Batch, spec: ObjectiveSpec) -> Dict[str, Tensor]:
    return {role: (weights * batch.effect_coefficients(spec.outcome(role))).sum() for role in spec.roles}


def ate_estimate(model, batch: Batch, outcome: str) -> float:
    _require_cohorts(batch)
    w = normalized_weights(model.log_weights(Tensor(model.params), batch))
    return float((w * batch.effect_coefficients(outcome)).sum().value)


def objective_loss_fn(model, batch: Batch, spec: ObjectiveSpec):
    """``theta -> loss`` closure for :func:`ctpm.diffcore.gradient`."""
    _require_cohorts(batch)
    coefs = {role: batch.effect_coefficients(spec.outcome(role)) for role in spec.roles}

    def loss(theta: Tensor) -> Tensor:
        w = normalized_weights(model.log_weights(theta, batch))
        return loss_from_effects(spec, {role: (w * c).sum() for role, c in coefs.items()})

    return loss


def composite_objective(model, batch: Batch, spec: ObjectiveSpec) -> float:
    """Composite loss (lower is better) at the model's current parameters."""
    return float(objective_loss_fn(model, batch, spec)(Tensor(model.params)).value)


def effective_sample_size(log_w: np.ndarray) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2`` from log weights."""
    log_w = np.asarray(log_w, dtype=np.float64)
    return float(np.exp(2.0 * logsumexp(log_w) - logsumexp(2.0 * log_w)))


def loss_and_ess(model, params: np.ndarray, batch: Batch, spec: ObjectiveSpec):
    """Composite loss and weight effective sample size at ``params``."""
    _require_cohorts(batch)
    log_w = model.log_weights(Tensor(np.asarray(params, dtype=np.float64)), batch).value
    w = np.exp(log_w - logsumexp(log_w))
    effects = {role: float(np.sum(w * batch.effect_coefficients(spec.outcome(role)))) for role in spec.roles}
    return float(loss_from_effects(spec, effects)), effective_sample_size(log_w)
