"""Dense two-layer networks over a flat parameter vector.

Flattening order is layer-major, weights before biases; each weight matrix
is stored row-major with shape ``(fan_in, fan_out)``.  A network therefore
owns the slice ``[offset, offset + n_params)`` of a model's parameter vector
and the layout is stable across releases.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tape
from .tape import Tensor

HIDDEN_ACTIVATIONS = ("tanh", "relu", "sigmoid")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "softplus-shifted")


class ShapeError(ValueError):
    """Input dimension does not match the network."""


def _activate(name: str, z: Tensor) -> Tensor:
    if name == "tanh":
        return tape.tanh(z)
    if name == "relu":
        return tape.relu(z)
    if name == "sigmoid":
        return tape.sigmoid(z)
    if name == "identity":
        return z
    if name == "softplus-shifted":
        return 1.0 + tape.softplus(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseNet:
    """Fully connected network with one weight matrix per consecutive pair of ``layer_dims``.

    The default ``(in, hidden, out)`` shape is a two-layer network.  ``params``
    holds the flattened weights; :meth:`apply` also accepts an explicit
    parameter tensor so the same network can be used inside a larger graph.
    """

    layer_dims: tuple
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    params: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError(f"invalid layer_dims {self.layer_dims}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.params is None:
            self.params = np.zeros(self.n_params)
        else:
            self.params = np.asarray(self.params, dtype=np.float64).copy()
            if self.params.shape != (self.n_params,):
                raise ShapeError(
                    f"expected {self.n_params} parameters for {self.layer_dims}, got {self.params.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def layers(self, flat):
        """Split a flat parameter vector (array or tensor) into ``(W, b)`` pairs."""
        out, pos = [], 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = flat[pos : pos + fan_out]
            pos += fan_out
            out.append((w, b))
        return out

    def initialize(self, rng: np.random.Generator) -> "DenseNet":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        chunks = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
            chunks.append(np.zeros(fan_out))
        self.params = np.concatenate(chunks)
        return self

    def pre_output(self, inputs, flat=None) -> Tensor:
        """Affine output of the last layer, before the output activation."""
        flat = tape.lift(self.params if flat is None else flat)
        h = tape.lift(inputs)
        if h.ndim == 1:
            h = h.reshape(1, -1)
        if h.shape[1] != self.input_dim:
            raise ShapeError(f"input has {h.shape[1]} features, network expects {self.input_dim}")
        layers = self.layers(flat)
        for i, (w, b) in enumerate(layers):
            h = h @ w + b
            if i < len(layers) - 1:
                h = _activate(self.hidden_activation, h)
        return h

    def apply(self, inputs, flat=None) -> Tensor:
        return _activate(self.output_activation, self.pre_output(inputs, flat))

    def forward(self, inputs) -> np.ndarray:
        """Evaluate on a single vector or a batch of row vectors (plain arrays)."""
        x = np.asarray(inputs, dtype=np.float64)
        out = self.apply(x).value
        return out[0] if x.ndim == 1 else out
