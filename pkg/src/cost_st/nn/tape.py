"""Reverse-mode differentiation over a small, fixed operator set.

A :class:`Tape` records nodes in creation order, which is already a
topological order, so ``backward`` is a single reversed sweep. A tape built
with ``record=False`` computes values only and keeps no activations; it may
also run in float32, which is lossless for weights stored as float32.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgument, StateError


class Node:
    __slots__ = ("value", "parents", "vjp", "param")

    def __init__(self, value, parents=(), vjp=None, param=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.param = param

    @property
    def shape(self):
        return self.value.shape


class Tape:
    def __init__(self, record: bool = True, dtype=np.float64):
        if record and np.dtype(dtype) != np.float64:
            raise InvalidArgument("a recording tape differentiates in float64 only")
        self.record = record
        self.dtype = np.dtype(dtype)
        self._nodes: list[Node] = []
        self._ids: set[int] = set()

    def _push(self, value, parents, vjp, param=None) -> Node:
        if not self.record:
            return Node(value)
        node = Node(value, parents, vjp, param)
        self._nodes.append(node)
        self._ids.add(id(node))
        return node

    def constant(self, value) -> Node:
        return Node(np.asarray(value, dtype=self.dtype))

    def param(self, p) -> Node:
        if not self.record:
            return Node(p.value.astype(self.dtype, copy=False))
        return self._push(p.value, (), None, param=p)

    def tracks(self, node: Node) -> bool:
        return id(node) in self._ids

    def backward(self, loss: Node) -> None:
        """Accumulate d(loss)/d(param) into every ``Parameter.grad`` reached."""
        if not self.record or id(loss) not in self._ids:
            raise StateError("backward() needs a loss produced by a forward pass on this tape")
        if loss.value.size != 1:
            raise InvalidArgument(f"loss must be scalar, got shape {loss.value.shape}")
        grads = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self._nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.param is not None:
                node.param.grad += g
                continue
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or id(parent) not in self._ids:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        self._nodes.clear()
        self._ids.clear()


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# Ops take the tape explicitly; a non-recording tape skips closure creation.


def linear(tape: Tape, x: Node, w: Node, b: Node | None) -> Node:
    if x.value.shape[-1] != w.value.shape[0]:
        raise InvalidArgument(
            f"linear: input width {x.value.shape[-1]} != weight rows {w.value.shape[0]}"
        )
    out = x.value @ w.value
    if b is not None:
        out = out + b.value
    if not tape.record:
        return Node(out)
    xv, wv = x.value, w.value
    need_gx = tape.tracks(x)

    def vjp(g):
        gx = g @ wv.T if need_gx else None
        gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if b is not None else None
        return gx, gw, gb

    return tape._push(out, (x, w, b), vjp)


def relu(tape: Tape, x: Node) -> Node:
    mask = x.value > 0
    out = np.where(mask, x.value, 0.0)
    if not tape.record:
        return Node(out)
    return tape._push(out, (x,), lambda g: (g * mask,))


def add(tape: Tape, a: Node, b: Node) -> Node:
    out = a.value + b.value
    if not tape.record:
        return Node(out)
    sa, sb = a.value.shape, b.value.shape
    return tape._push(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def concat(tape: Tape, nodes: list, axis: int = -1) -> Node:
    vals = [n.value for n in nodes]
    out = np.concatenate(vals, axis=axis)
    if not tape.record:
        return Node(out)
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return tape._push(out, tuple(nodes), vjp)


def embedding(tape: Tape, table: Node, index) -> Node:
    idx = np.asarray(index, dtype=np.int64)
    rows = table.value.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise InvalidArgument(f"embedding index out of range [0, {rows})")
    out = table.value[idx]
    if not tape.record:
        return Node(out)
    shape = table.value.shape

    def vjp(g):
        gt = np.zeros(shape)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, shape[1]))
        return (gt,)

    return tape._push(out, (table,), vjp)


def reshape(tape: Tape, x: Node, shape) -> Node:
    out = x.value.reshape(shape)
    if not tape.record:
        return Node(out)
    src = x.value.shape
    return tape._push(out, (x,), lambda g: (g.reshape(src),))


def mse(tape: Tape, pred: Node, target) -> Node:
    target = np.asarray(target, dtype=np.float64)
    if pred.value.shape != target.shape:
        raise InvalidArgument(f"mse: shape {pred.value.shape} != target {target.shape}")
    diff = pred.value - target
    out = np.array(np.mean(diff * diff))
    if not tape.record:
        return Node(out)
    scale = 2.0 / diff.size
    return tape._push(out, (pred,), lambda g: (g * scale * diff,))


def total(tape: Tape, x: Node) -> Node:
    out = np.array(x.value.sum())
    if not tape.record:
        return Node(out)
    shape = x.value.shape
    return tape._push(out, (x,), lambda g: (np.broadcast_to(g, shape).copy(),))
