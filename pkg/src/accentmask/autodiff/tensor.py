"""Tensors and reverse-mode gradient propagation."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError, StateError


class Tensor:
    """A float64 array plus the graph edge that produced it.

    Leaves have ``op == "leaf"`` and no parents. Non-leaf tensors carry a
    ``vjp`` closure mapping the output cotangent to one cotangent per parent
    (``None`` where a parent receives no gradient).
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "parents", "vjp", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self.vjp: Callable | None = None
        self.name = name

    @classmethod
    def from_op(cls, data, op: str, parents: Sequence["Tensor"], vjp: Callable) -> "Tensor":
        out = cls(data)
        out.op = op
        out.parents = tuple(parents)
        out.vjp = vjp
        out.requires_grad = any(p.requires_grad for p in out.parents)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(op={self.op}, shape={self.shape})"

    def backward(self, seed=None) -> None:
        """Accumulate gradients into ``.grad`` of every leaf requiring one."""
        leaves = [t for t in topological_order(self) if t.op == "leaf" and t.requires_grad]
        for leaf, g in zip(leaves, grad(self, leaves, seed)):
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root``, every parent before its children."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node.parents if id(p) not in seen)
    return order


def grad(output: Tensor, wrt: Sequence[Tensor], seed=None) -> list[np.ndarray]:
    """Gradients of ``output`` with respect to each tensor in ``wrt``.

    ``seed`` is the cotangent of ``output``; it defaults to 1 and must be given
    explicitly for non-scalar outputs. Intermediate (non-leaf) tensors may
    appear in ``wrt``. Only nodes lying on a path from ``wrt`` to ``output`` are
    visited, each exactly once.
    """
    if output.op == "leaf" and not any(t is output for t in wrt):
        raise StateError("output has no recorded graph; run a forward pass first")
    if seed is None:
        if output.data.size != 1:
            raise ShapeError(f"seed required for non-scalar output of shape {output.shape}")
        seed = np.ones_like(output.data)
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != output.shape:
        raise ShapeError(f"seed shape {seed.shape} != output shape {output.shape}")

    order = topological_order(output)
    targets = {id(t) for t in wrt}
    needs: dict[int, bool] = {}
    for node in order:
        needs[id(node)] = id(node) in targets or any(needs[id(p)] for p in node.parents)

    cotangents: dict[int, np.ndarray] = {id(output): seed}
    kept: dict[int, np.ndarray] = {}
    for node in reversed(order):
        g = cotangents.pop(id(node), None)
        if g is None:
            continue
        if id(node) in targets:
            kept[id(node)] = g
        if not node.parents or not needs[id(node)]:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not needs[id(parent)]:
                continue
            key = id(parent)
            cotangents[key] = pg if key not in cotangents else cotangents[key] + pg
    return [kept.get(id(t), np.zeros_like(t.data)) for t in wrt]
