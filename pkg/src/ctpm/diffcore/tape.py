"""Reverse-mode differentiation over numpy arrays.

Only the operations needed by the estimators in this package are provided:
affine maps, elementwise nonlinearities, reductions, products, quotients,
logarithms and the pieces of a cosine similarity.  Every node checks its
value for non-finite entries at construction time so a blow-up is reported
at the operation that caused it rather than at the loss.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special


class NonFiniteError(FloatingPointError):
    """Raised when an intermediate value is NaN or infinite."""


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out the axes numpy broadcasting added or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph.

    Parameters
    ----------
    value : array_like
        Numeric value, stored as float64.
    parents : sequence of Tensor
        Inputs the value was computed from.
    backward : callable, optional
        Maps the upstream gradient to a tuple of gradients, one per parent.
    op : str
        Name of the producing operation, used in error messages.
    """

    __slots__ = ("value", "grad", "parents", "backward", "op", "needs_grad")
    __array_priority__ = 100.0

    def __init__(self, value, parents: Sequence["Tensor"] = (), backward=None, op: str = "leaf",
                 needs_grad: bool = False):
        self.value = _as_array(value)
        self.op = op
        self.grad: Optional[np.ndarray] = None
        self.needs_grad = needs_grad or any(p.needs_grad for p in parents)
        # constants fold: nodes without a differentiable ancestor keep no graph
        self.parents = tuple(parents) if self.needs_grad else ()
        self.backward: Optional[Callable] = backward if self.needs_grad else None
        if parents and not np.all(np.isfinite(self.value)):
            raise NonFiniteError(f"non-finite value produced by '{op}'")

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = lift(other)
        a, b = self.shape, other.shape
        return Tensor(
            self.value + other.value,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)),
            "add",
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.value, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        return self + (-lift(other))

    def __rsub__(self, other):
        return lift(other) + (-self)

    def __mul__(self, other):
        other = lift(other)
        av, bv = self.value, other.value
        na, nb = self.needs_grad, other.needs_grad
        return Tensor(
            av * bv,
            (self, other),
            lambda g: (
                _unbroadcast(g * bv, av.shape) if na else None,
                _unbroadcast(g * av, bv.shape) if nb else None,
            ),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = lift(other)
        av, bv = self.value, other.value
        out = av / bv
        na, nb = self.needs_grad, other.needs_grad
        return Tensor(
            out,
            (self, other),
            lambda g: (
                _unbroadcast(g / bv, av.shape) if na else None,
                _unbroadcast(-g * out / bv, bv.shape) if nb else None,
            ),
            "div",
        )

    def __rtruediv__(self, other):
        return lift(other) / self

    def __pow__(self, exponent: float):
        av = self.value
        return Tensor(
            av**exponent,
            (self,),
            lambda g: (g * exponent * av ** (exponent - 1),),
            "pow",
        )

    def __matmul__(self, other):
        other = lift(other)
        av, bv = self.value, other.value
        na, nb = self.needs_grad, other.needs_grad
        return Tensor(
            av @ bv,
            (self, other),
            lambda g: (g @ bv.T if na else None, av.T @ g if nb else None),
            "matmul",
        )

    def __rmatmul__(self, other):
        return lift(other) @ self

    # shape ----------------------------------------------------------------

    def __getitem__(self, index):
        shape = self.shape

        basic = all(isinstance(i, (int, slice, type(None), type(Ellipsis)))
                    for i in (index if isinstance(index, tuple) else (index,)))

        def back(g):
            full = np.zeros(shape)
            if basic:
                full[index] = g
            else:
                np.add.at(full, index, g)
            return (full,)

        return Tensor(self.value[index], (self,), back, "getitem")

    def reshape(self, *shape):
        old = self.shape
        return Tensor(self.value.reshape(*shape), (self,), lambda g: (g.reshape(old),), "reshape")

    def sum(self, axis=None):
        shape = self.shape

        def back(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor(self.value.sum(axis=axis), (self,), back, "sum")

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.shape[axis]
        return self.sum(axis) / float(n)


def lift(value) -> Tensor:
    """Wrap a constant as a graph leaf (no-op for tensors)."""
    return value if isinstance(value, Tensor) else Tensor(value)


# elementwise functions ------------------------------------------------------


def exp(x):
    x = lift(x)
    out = np.exp(x.value)
    return Tensor(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    x = lift(x)
    xv = x.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(xv)
    return Tensor(out, (x,), lambda g: (g / xv,), "log")


def sqrt(x):
    x = lift(x)
    out = np.sqrt(x.value)
    return Tensor(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    return special.expit(z)


def sigmoid(x):
    x = lift(x)
    out = special.expit(x.value)
    return Tensor(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log_sigmoid(x):
    """log(sigmoid(x)) without underflow for very negative x."""
    x = lift(x)
    out = -np.logaddexp(0.0, -x.value)
    s = special.expit(-x.value)
    return Tensor(out, (x,), lambda g: (g * s,), "log_sigmoid")


def tanh(x):
    x = lift(x)
    out = np.tanh(x.value)
    return Tensor(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(x):
    x = lift(x)
    mask = x.value > 0
    return Tensor(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def softplus(x):
    x = lift(x)
    out = np.logaddexp(0.0, x.value)
    s = special.expit(x.value)
    return Tensor(out, (x,), lambda g: (g * s,), "softplus")


def gammaln(x):
    x = lift(x)
    xv = x.value
    return Tensor(special.gammaln(xv), (x,), lambda g: (g * special.digamma(xv),), "gammaln")


def maximum(x, floor: float):
    """Elementwise max with a constant; the gradient is cut below the floor."""
    x = lift(x)
    mask = x.value >= floor
    return Tensor(np.where(mask, x.value, floor), (x,), lambda g: (g * mask,), "maximum")


def sign_floor(x, floor: float):
    """Keep the sign of x but push its magnitude up to at least ``floor``.

    Zero maps to ``+floor``.
    """
    x = lift(x)
    xv = x.value
    keep = np.abs(xv) >= floor
    out = np.where(keep, xv, np.where(xv < 0, -floor, floor))
    return Tensor(out, (x,), lambda g: (g * keep,), "sign_floor")


def logsumexp(x):
    """log(sum(exp(x))) over all entries, shifted by the (constant) max."""
    x = lift(x)
    shift = float(np.max(x.value))
    return log(exp(x - shift).sum()) + shift


def concat_columns(parts: Sequence) -> Tensor:
    parts = [lift(p) for p in parts]
    widths = [p.shape[1] for p in parts]
    edges = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, edges[i] : edges[i + 1]] for i in range(len(parts)))

    return Tensor(np.concatenate([p.value for p in parts], axis=1), parts, back, "concat")


# reverse sweep ---------------------------------------------------------------


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backprop(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into ``node.grad`` for every ancestor."""
    if root.value.size != 1:
        raise ValueError("backprop needs a scalar root")
    order = _topological(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.backward is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.backward(node.grad)):
            if g is None or not parent.needs_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g
