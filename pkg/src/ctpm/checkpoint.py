"""Checkpoint files and embedding export.

A checkpoint is a UTF-8 JSON document::

    {
      "format": "ctpm-checkpoint",
      "version": 1,
      "models": {"<name>": {"kind": "ctpm" | "simple_ct" | "rlearner", ...}},
      "objective": {...} | null,
      "normalization": {...} | null,
      "propensity": {...} | null,
      "features": {"subject": [...], "candidate": [...]} | null
    }

Every network is stored as its ``layer_dims`` header, activation tags and
the flattened parameter vector (layer-major, weights before biases, each
weight matrix row-major ``(fan_in, fan_out)``).  Floats are written with
``repr`` precision, so a load/save round trip is exact and identical inputs
give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np

from .baselines import LinearEffect, RLearnerModel, SimpleCtModel
from .dataset import Dataset, NormalizationStats
from .diffcore import DenseNet
from .model import CtpmModel, ObjectiveSpec
from .propensity import PropensityModel

FORMAT = "ctpm-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, unknown-version or inconsistent checkpoint."""


def _net_to_dict(net: DenseNet) -> dict:
    return {
        "layer_dims": list(net.layer_dims),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "params": [float(v) for v in net.params],
    }


def _net_from_dict(data: Mapping) -> DenseNet:
    net = DenseNet(tuple(data["layer_dims"]), data["hidden_activation"], data["output_activation"])
    params = np.asarray(data["params"], dtype=np.float64)
    if params.shape != (net.n_params,):
        raise CheckpointError(f"network {net.layer_dims} expects {net.n_params} parameters, file has {params.size}")
    net.params = params
    return net


def _propensity(data) -> Optional[PropensityModel]:
    return None if data is None else PropensityModel.from_dict(data)


def model_to_dict(model) -> dict:
    if isinstance(model, CtpmModel):
        return {
            "kind": "ctpm",
            "policy_family": model.policy_family,
            "sharpness": float(model.sharpness),
            "overall_propensity": float(model.overall_propensity),
            "propensity": model.propensity.to_dict() if model.propensity else None,
            "nets": {name: _net_to_dict(getattr(model, name)) for name in CtpmModel.NET_NAMES},
        }
    if isinstance(model, SimpleCtModel):
        return {
            "kind": "simple_ct",
            "weights": [float(v) for v in model.weights],
            "bias": float(model.bias),
            "overall_propensity": float(model.overall_propensity),
            "propensity": model.propensity.to_dict() if model.propensity else None,
        }
    if isinstance(model, RLearnerModel):
        return {
            "kind": "rlearner",
            "objective": model.spec.to_dict(),
            "effects": {
                role: {
                    "outcome_coef": [float(v) for v in eff.outcome_coef],
                    "effect_coef": [float(v) for v in eff.effect_coef],
                }
                for role, eff in sorted(model.effects.items())
            },
        }
    raise CheckpointError(f"cannot serialize {type(model).__name__}")


def model_from_dict(data: Mapping):
    kind = data.get("kind")
    if kind == "ctpm":
        nets = {name: _net_from_dict(data["nets"][name]) for name in CtpmModel.NET_NAMES}
        return CtpmModel(
            **nets,
            policy_family=data["policy_family"],
            propensity=_propensity(data.get("propensity")),
            overall_propensity=data["overall_propensity"],
            sharpness=data["sharpness"],
        )
    if kind == "simple_ct":
        return SimpleCtModel(
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            propensity=_propensity(data.get("propensity")),
            overall_propensity=data["overall_propensity"],
        )
    if kind == "rlearner":
        effects = {
            role: LinearEffect(np.asarray(e["outcome_coef"], dtype=np.float64), np.asarray(e["effect_coef"], dtype=np.float64))
            for role, e in data["effects"].items()
        }
        return RLearnerModel(spec=ObjectiveSpec.from_dict(data["objective"]), effects=effects)
    raise CheckpointError(f"unknown model kind {kind!r}")


def dumps(models: Mapping[str, object], spec: Optional[ObjectiveSpec] = None,
          normalization: Optional[NormalizationStats] = None,
          propensity: Optional[PropensityModel] = None,
          features: Optional[Mapping[str, list]] = None) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "models": {name: model_to_dict(m) for name, m in models.items()},
        "objective": spec.to_dict() if spec is not None else None,
        "normalization": normalization.to_dict() if normalization is not None else None,
        "propensity": propensity.to_dict() if propensity is not None else None,
        "features": {k: list(v) for k, v in features.items()} if features is not None else None,
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def atomic_write_text(path, text: str) -> Path:
    """Write via a temporary file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_checkpoint(path, models: Mapping[str, object], spec: Optional[ObjectiveSpec] = None,
                    normalization: Optional[NormalizationStats] = None,
                    propensity: Optional[PropensityModel] = None,
                    features: Optional[Mapping[str, list]] = None) -> Path:
    return atomic_write_text(path, dumps(models, spec, normalization, propensity, features))


class Checkpoint:
    """Parsed checkpoint: named models plus the objective, normalization,
    propensity and feature names they were trained with."""

    def __init__(self, models: Dict[str, object], spec: Optional[ObjectiveSpec] = None,
                 normalization: Optional[NormalizationStats] = None,
                 propensity: Optional[PropensityModel] = None,
                 features: Optional[Dict[str, list]] = None):
        self.models = models
        self.spec = spec
        self.normalization = normalization
        self.propensity = propensity
        self.features = features

    def __getitem__(self, name: str):
        return self.models[name]


def loads(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not a ctpm checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        models = {name: model_from_dict(m) for name, m in doc["models"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"malformed model entry: {exc}") from None
    spec = ObjectiveSpec.from_dict(doc["objective"]) if doc.get("objective") else None
    try:
        norm = NormalizationStats.from_dict(doc["normalization"]) if doc.get("normalization") else None
        prop = _propensity(doc.get("propensity"))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    return Checkpoint(models, spec, norm, prop, doc.get("features"))


def load_checkpoint(path) -> Checkpoint:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    return loads(text)


def export_embeddings(model: CtpmModel, dataset: Dataset, path, delimiter: str = ",") -> Path:
    """One row per record: ids, then the subject and candidate embedding vectors."""
    es, ec = model.embeddings(dataset.x, dataset.y)
    dim = es.shape[1]
    header = ["subject_id", "candidate_id"] + [f"subject_emb{i}" for i in range(dim)] + [f"candidate_emb{i}" for i in range(dim)]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            writer.writerow(
                [dataset.subject_ids[i], dataset.candidate_ids[i]]
                + [repr(float(v)) for v in es[i]]
                + [repr(float(v)) for v in ec[i]]
            )
    return path
