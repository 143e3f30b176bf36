"""Reverse-mode automatic differentiation with support for second derivatives.

Expressions are built as directed acyclic graphs of :class:`Node` objects via
operator overloading or the module-level op functions. Values are float64
scalars or numpy arrays; a graph built once on array leaves evaluates all rows
at once. Gradients are produced by :func:`grad` as new graph nodes, so
differentiating a gradient again yields exact second derivatives
(reverse-over-reverse).

The op set is closed: add, sub, mul, div, neg, pow (constant exponent), tanh,
sin, cos, exp, plus the array plumbing the surrogate network needs (matmul,
transpose, column concat/slice, sum, broadcast).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for engine errors."""


class NonFiniteValueError(AutodiffError):
    """An intermediate value is inf or nan; carries the offending node's descriptor."""

    def __init__(self, descriptor: str):
        self.descriptor = descriptor
        super().__init__(f"non-finite value at node {descriptor}")


class UnknownTagError(AutodiffError):
    """A requested differentiation tag is not among the graph's tagged leaves."""


# ---------------------------------------------------------------------------
# forward kernels, shared by node construction and by evaluate()'s re-walk so
# that re-evaluation is bit-for-bit identical
# ---------------------------------------------------------------------------

def _fw_add(aux, a, b):
    return a + b


def _fw_sub(aux, a, b):
    return a - b


def _fw_mul(aux, a, b):
    return a * b


def _fw_div(aux, a, b):
    with np.errstate(all="ignore"):
        return a / b


def _fw_neg(aux, a):
    return -a


def _fw_pow(aux, a):
    with np.errstate(all="ignore"):
        return a ** aux


def _fw_tanh(aux, a):
    return np.tanh(a)


def _fw_sin(aux, a):
    return np.sin(a)


def _fw_cos(aux, a):
    return np.cos(a)


def _fw_exp(aux, a):
    with np.errstate(all="ignore"):
        return np.exp(a)


def _fw_matmul(aux, a, b):
    return a @ b


def _fw_transpose(aux, a):
    return a.T


def _fw_sumall(aux, a):
    return np.sum(a)


def _fw_sumto(aux, a):
    # aux is the target shape; sum out broadcast axes
    shape = aux
    out = a
    while out.ndim > len(shape):
        out = out.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and out.shape[ax] != 1:
            out = out.sum(axis=ax, keepdims=True)
    return out


def _fw_broadcast(aux, a):
    return np.broadcast_to(a, aux).copy()


def _fw_concat(aux, *parts):
    return np.concatenate(parts, axis=1)


def _fw_slice(aux, a):
    lo, hi = aux
    return a[:, lo:hi]


def _fw_pad(aux, a):
    lo, total = aux
    out = np.zeros((a.shape[0], total), dtype=np.float64)
    out[:, lo:lo + a.shape[1]] = a
    return out


_FORWARD = {
    "add": _fw_add,
    "sub": _fw_sub,
    "mul": _fw_mul,
    "div": _fw_div,
    "neg": _fw_neg,
    "pow": _fw_pow,
    "tanh": _fw_tanh,
    "sin": _fw_sin,
    "cos": _fw_cos,
    "exp": _fw_exp,
    "matmul": _fw_matmul,
    "transpose": _fw_transpose,
    "sumall": _fw_sumall,
    "sumto": _fw_sumto,
    "broadcast": _fw_broadcast,
    "concat": _fw_concat,
    "slice": _fw_slice,
    "pad": _fw_pad,
}


class Node:
    """One node of the computation graph.

    ``op`` is ``"leaf"`` for inputs/constants, otherwise a key of the op
    tables. ``tag`` marks a leaf as a differentiation variable so it can be
    addressed by name in a :class:`GradientRequest`.
    """

    __slots__ = ("value", "op", "parents", "aux", "tag")

    def __init__(self, value, op="leaf", parents=(), aux=None, tag=None):
        if isinstance(value, np.ndarray) and value.dtype == np.float64:
            self.value = value
        else:
            self.value = np.asarray(value, dtype=np.float64)
        self.op = op
        self.parents = parents
        self.aux = aux
        self.tag = tag

    @property
    def shape(self):
        return self.value.shape

    def descriptor(self) -> str:
        tagpart = f" tag={self.tag!r}" if self.tag else ""
        return f"<{self.op} shape={self.value.shape}{tagpart}>"

    def __repr__(self):
        return f"Node({self.op}, value={self.value!r})"

    # arithmetic sugar; plain numbers are wrapped as constants
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

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)


def variable(value, tag: str | None = None) -> Node:
    """A leaf the graph can be differentiated with respect to."""
    return Node(value, tag=tag)


def constant(value) -> Node:
    """A leaf treated as fixed data."""
    return Node(value)


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _make(op, parents, aux=None) -> Node:
    value = _FORWARD[op](aux, *(p.value for p in parents))
    return Node(value, op=op, parents=tuple(parents), aux=aux)


def add(a: Node, b: Node) -> Node:
    return _make("add", (a, b))


def sub(a: Node, b: Node) -> Node:
    return _make("sub", (a, b))


def mul(a: Node, b: Node) -> Node:
    return _make("mul", (a, b))


def div(a: Node, b: Node) -> Node:
    return _make("div", (a, b))


def neg(a: Node) -> Node:
    return _make("neg", (a,))


def power(a: Node, exponent: float) -> Node:
    if isinstance(exponent, Node):
        raise TypeError("power supports constant exponents only")
    return _make("pow", (a,), aux=float(exponent))


def tanh(a: Node) -> Node:
    return _make("tanh", (a,))


def sin(a: Node) -> Node:
    return _make("sin", (a,))


def cos(a: Node) -> Node:
    return _make("cos", (a,))


def exp(a: Node) -> Node:
    return _make("exp", (a,))


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}")
    return _make("matmul", (a, b))


def transpose(a: Node) -> Node:
    return _make("transpose", (a,))


def sumall(a: Node) -> Node:
    """Sum of all elements, as a scalar node."""
    return _make("sumall", (a,))


def concat_cols(parts: Sequence[Node]) -> Node:
    """Concatenate 2-D nodes along columns."""
    widths = tuple(p.value.shape[1] for p in parts)
    return _make("concat", tuple(parts), aux=widths)


def slice_cols(a: Node, lo: int, hi: int) -> Node:
    return _make("slice", (a,), aux=(lo, hi))


def _sum_to(g: Node, shape) -> Node:
    if g.value.shape == shape:
        return g
    return _make("sumto", (g,), aux=tuple(shape))


def _broadcast_to(g: Node, shape) -> Node:
    if g.value.shape == shape:
        return g
    return _make("broadcast", (g,), aux=tuple(shape))


# ---------------------------------------------------------------------------
# vector-Jacobian products; each returns (parent, contribution) pairs built
# from engine ops so gradients stay differentiable
# ---------------------------------------------------------------------------

def _vjp(node: Node, g: Node):
    op = node.op
    p = node.parents
    if op == "add":
        return ((p[0], _sum_to(g, p[0].shape)), (p[1], _sum_to(g, p[1].shape)))
    if op == "sub":
        return ((p[0], _sum_to(g, p[0].shape)), (p[1], _sum_to(neg(g), p[1].shape)))
    if op == "mul":
        return ((p[0], _sum_to(mul(g, p[1]), p[0].shape)),
                (p[1], _sum_to(mul(g, p[0]), p[1].shape)))
    if op == "div":
        return ((p[0], _sum_to(div(g, p[1]), p[0].shape)),
                (p[1], _sum_to(neg(div(mul(g, node), p[1])), p[1].shape)))
    if op == "neg":
        return ((p[0], neg(g)),)
    if op == "pow":
        c = node.aux
        if c == 2.0:
            local = mul(p[0], constant(2.0))
        elif c == 1.0:
            return ((p[0], g),)
        else:
            local = mul(constant(c), power(p[0], c - 1.0))
        return ((p[0], mul(g, local)),)
    if op == "tanh":
        return ((p[0], mul(g, sub(constant(1.0), mul(node, node)))),)
    if op == "sin":
        return ((p[0], mul(g, cos(p[0]))),)
    if op == "cos":
        return ((p[0], neg(mul(g, sin(p[0])))),)
    if op == "exp":
        return ((p[0], mul(g, node)),)
    if op == "matmul":
        return ((p[0], matmul(g, transpose(p[1]))),
                (p[1], matmul(transpose(p[0]), g)))
    if op == "transpose":
        return ((p[0], transpose(g)),)
    if op == "sumall":
        return ((p[0], _broadcast_to(g, p[0].shape)),)
    if op == "sumto":
        return ((p[0], _broadcast_to(g, p[0].shape)),)
    if op == "broadcast":
        return ((p[0], _sum_to(g, p[0].shape)),)
    if op == "concat":
        out = []
        lo = 0
        for parent, w in zip(p, node.aux):
            out.append((parent, slice_cols(g, lo, lo + w)))
            lo += w
        return tuple(out)
    if op == "slice":
        lo, hi = node.aux
        return ((p[0], _make("pad", (g,), aux=(lo, p[0].shape[1]))),)
    if op == "pad":
        lo, total = node.aux
        return ((p[0], slice_cols(g, lo, lo + p[0].shape[1])),)
    raise AssertionError(f"no vjp for op {op!r}")


def _toposort(root: Node) -> list[Node]:
    """Parents-before-children ordering, iterative to handle deep graphs."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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


def evaluate(root: Node):
    """Recompute the graph from its leaves and return the root value.

    Raises :class:`NonFiniteValueError` at the first node whose recomputed
    value is inf or nan (division by zero included). Identical leaf values
    reproduce identical node values bit-for-bit because the same forward
    kernels run in the same order.
    """
    vals: dict[int, np.ndarray] = {}
    for node in _toposort(root):
        if node.op == "leaf":
            v = node.value
        else:
            v = _FORWARD[node.op](node.aux, *(vals[id(p)] for p in node.parents))
        if not np.all(np.isfinite(v)):
            raise NonFiniteValueError(node.descriptor())
        vals[id(node)] = v
    out = vals[id(root)]
    return float(out) if out.ndim == 0 else out


def grad(output: Node, wrt: Sequence[Node]) -> list[Node]:
    """Gradients of a scalar output with respect to the given nodes.

    Returns one node per entry of ``wrt``; results are themselves graph
    nodes, so calling :func:`grad` on them yields second derivatives. A node
    the output does not depend on gets an exact-zero gradient.
    """
    if output.value.size != 1:
        raise ValueError(f"grad needs a scalar output, got shape {output.value.shape}")
    order = _toposort(output)
    grads: dict[int, Node] = {id(output): constant(np.ones_like(output.value))}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.op == "leaf":
            continue
        for parent, contrib in _vjp(node, g):
            prev = grads.get(id(parent))
            grads[id(parent)] = contrib if prev is None else add(prev, contrib)
    out = []
    for w in wrt:
        g = grads.get(id(w))
        out.append(g if g is not None else constant(np.zeros_like(w.value)))
    return out


@dataclass(frozen=True)
class GradientRequest:
    """Which partials to take: tags of the input leaves and the order (1 or 2)."""

    wrt: tuple[str, ...]
    order: int = 1

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")


def tagged_leaves(root: Node) -> dict[str, Node]:
    """Map of tag -> leaf for all tagged leaves reachable from ``root``."""
    found: dict[str, Node] = {}
    for node in _toposort(root):
        if node.op == "leaf" and node.tag is not None:
            if node.tag in found and found[node.tag] is not node:
                raise UnknownTagError(f"tag {node.tag!r} appears on multiple leaves")
            found[node.tag] = node
    return found


def derivative(root: Node, req: GradientRequest) -> np.ndarray:
    """Partial derivatives of a scalar graph with respect to tagged leaves.

    Order 1 returns a vector, one entry per tag in ``req.wrt``. Order 2
    returns the full matrix of second partials, ``out[i, j] = d2f/dti dtj``.
    """
    leaves = tagged_leaves(root)
    nodes = []
    for tag in req.wrt:
        if tag not in leaves:
            raise UnknownTagError(f"tag {tag!r} not found among the graph's tagged leaves")
        nodes.append(leaves[tag])
    firsts = grad(root, nodes)
    if req.order == 1:
        return np.array([g.value.item() for g in firsts])
    rows = []
    for g1 in firsts:
        seconds = grad(g1, nodes) if g1.op != "leaf" else [constant(0.0)] * len(nodes)
        rows.append([g2.value.item() for g2 in seconds])
    return np.array(rows)
