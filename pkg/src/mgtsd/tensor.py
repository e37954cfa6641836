"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its parents and a vector-Jacobian closure on an
implicit tape (the graph itself). ``grad`` replays the tape in reverse
topological order and is a pure function: calling it twice on the same
graph yields bit-identical gradients. Reductions use numpy's fixed
left-to-right summation, so repeated runs on the same build are
bit-identical.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Array = np.ndarray


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum gradient ``g`` over axes that were broadcast to reach ``g.shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """Immutable dense array node. Leaf tensors have no parents."""

    __slots__ = ("data", "_parents", "_vjp")

    def __init__(
        self,
        data,
        _parents: tuple["Tensor", ...] = (),
        _vjp: Callable[[Array], tuple[Array, ...]] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        leaf = "leaf" if self._vjp is None else "node"
        return f"Tensor(shape={self.shape}, {leaf})"

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data) -> Tensor:
    """Wrap ``data`` as a constant leaf tensor."""
    return Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros_like(t.data))


# primitive operations ----------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    ash, bsh = a.shape, b.shape
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    ash, bsh = a.shape, b.shape
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data
    return Tensor(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if bd.ndim != 2:
        raise ValueError("matmul right operand must be a matrix")
    if ad.ndim == 1:
        out = ad @ bd

        def vjp_vec(g: Array) -> tuple[Array, Array]:
            return g @ bd.T, np.outer(ad, g)

        return Tensor(out, (a, b), vjp_vec)
    if ad.ndim < 2:
        raise ValueError("matmul left operand must have ndim >= 1")
    out = ad @ bd

    def vjp(g: Array) -> tuple[Array, Array]:
        ga = _unbroadcast(g @ bd.T, ad.shape)
        gb = _unbroadcast(ad.swapaxes(-1, -2) @ g, bd.shape)
        return ga, gb

    return Tensor(out, (a, b), vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,))


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x), smooth everywhere (keeps finite-difference checks honest)."""
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * s
    return Tensor(out, (a,), lambda g: (g * (s + out * (1.0 - s)),))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    ash = a.shape

    def vjp(g: Array) -> tuple[Array]:
        if axis is None:
            return (np.broadcast_to(g, ash).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, ash).copy(),)

    return Tensor(out, (a,), vjp)


def mean(a: Tensor) -> Tensor:
    n = a.size
    out = a.data.mean()
    ash = a.shape
    return Tensor(out, (a,), lambda g: (np.broadcast_to(g / n, ash).copy(),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    return Tensor(out, parts, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(parts)
    out = np.stack([p.data for p in parts], axis=axis)

    def vjp(g: Array) -> tuple[Array, ...]:
        return tuple(np.moveaxis(g, axis, 0)[i] for i in range(len(parts)))

    return Tensor(out, parts, vjp)


def reshape(a: Tensor, shape) -> Tensor:
    ash = a.shape
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(ash),))


def moveaxis(a: Tensor, src: int, dst: int) -> Tensor:
    out = np.moveaxis(a.data, src, dst)
    return Tensor(out, (a,), lambda g: (np.moveaxis(g, dst, src),))


# reverse-mode gradient ----------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order over the graph reachable from ``root``."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def grad(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, Tensor]:
    """Gradient of a scalar ``loss`` with respect to named parameters.

    Parameters that the loss does not depend on receive zero tensors.
    The traversal never mutates the graph, so repeated calls return
    bit-identical results.
    """
    if loss.size != 1:
        raise ValueError("gradient source must be scalar")
    order = _topo_order(loss)
    adjoint: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None or node._vjp is None:
            continue
        contribs = node._vjp(g)
        for parent, contrib in zip(node._parents, contribs):
            if contrib is None:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + contrib
            else:
                adjoint[key] = contrib
    out: dict[str, Tensor] = {}
    for name, p in params.items():
        g = adjoint.get(id(p))
        if g is None:
            out[name] = Tensor(np.zeros_like(p.data))
        else:
            out[name] = Tensor(np.array(g, dtype=np.float64, copy=True))
    return out
