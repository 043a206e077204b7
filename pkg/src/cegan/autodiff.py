"""Define-by-run reverse-mode automatic differentiation over float64 arrays.

A :class:`Tape` records every operation as a :class:`Node` in topological
order. Values are computed eagerly when a node is pushed; :func:`forward`
replays the recorded graph with new leaf bindings and :func:`backward`
sweeps adjoints from a scalar root back to the named leaves.

Only the handful of kinds the GAN objectives need are supported. Broadcasting
is limited to ``add_bias`` (row-vector bias onto a 2-D batch).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "Node",
    "Tape",
    "ShapeError",
    "forward",
    "backward",
    "grad_check",
    "stable_sigmoid",
]


class ShapeError(ValueError):
    """Incompatible operand shapes for an operation kind."""


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


class Node:
    __slots__ = ("tape", "index", "op", "inputs", "value", "adjoint", "name", "attrs", "requires_grad")

    def __init__(self, tape, index, op, inputs, value, name=None, attrs=None, requires_grad=False):
        self.tape = tape
        self.index = index
        self.op = op
        self.inputs = inputs
        self.value = value
        self.adjoint = None
        self.name = name
        self.attrs = attrs
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node#{self.index}<{self.op}{label} shape={self.shape}>"

    # operator sugar; everything routes through the owning tape
    def __add__(self, other):
        if isinstance(other, Node):
            return self.tape.add(self, other)
        return self.tape.add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Node):
            return self.tape.sub(self, other)
        return self.tape.add_scalar(self, -float(other))

    def __rsub__(self, other):
        return self.tape.add_scalar(self.tape.scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Node):
            return self.tape.mul(self, other)
        return self.tape.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.scale(self, -1.0)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)


def _require_same(node_op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{node_op}: operand shapes {a.shape} and {b.shape} differ")


def _fwd(op: str, vals: list[np.ndarray], attrs) -> np.ndarray:
    if op == "add":
        _require_same(op, vals[0], vals[1])
        return vals[0] + vals[1]
    if op == "sub":
        _require_same(op, vals[0], vals[1])
        return vals[0] - vals[1]
    if op == "mul":
        _require_same(op, vals[0], vals[1])
        return vals[0] * vals[1]
    if op == "matmul":
        a, b = vals
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        return a @ b
    if op == "add_bias":
        x, b = vals
        if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
            raise ShapeError(f"add_bias: bias {b.shape} does not fit batch {x.shape}")
        return x + b
    if op == "sigmoid":
        return stable_sigmoid(vals[0])
    if op == "tanh":
        return np.tanh(vals[0])
    if op == "relu":
        return np.maximum(vals[0], 0.0)
    if op == "log":
        if np.any(vals[0] <= 0.0):
            raise ValueError("log: non-positive argument (clamp before taking logs)")
        return np.log(vals[0])
    if op == "square":
        return vals[0] * vals[0]
    if op == "sqrt":
        if np.any(vals[0] < 0.0):
            raise ValueError("sqrt: negative argument")
        return np.sqrt(vals[0])
    if op == "mean":
        return np.asarray(vals[0].mean())
    if op == "sum":
        return np.asarray(vals[0].sum())
    if op == "sum_rows":
        if vals[0].ndim != 2:
            raise ShapeError(f"sum_rows: expected a 2-D operand, got {vals[0].shape}")
        return vals[0].sum(axis=1)
    if op == "scale":
        return attrs * vals[0]
    if op == "add_scalar":
        return vals[0] + attrs
    if op == "clamp_min":
        return np.maximum(vals[0], attrs)
    if op == "transpose":
        if vals[0].ndim != 2:
            raise ShapeError(f"transpose: expected a 2-D operand, got {vals[0].shape}")
        return vals[0].T.copy()
    raise ValueError(f"unknown operation kind {op!r}")


def _bwd(node: Node, vals: list[np.ndarray], g: np.ndarray) -> list[np.ndarray | None]:
    """Adjoint contributions of ``node`` to each of its inputs."""
    op = node.op
    if op == "add":
        return [g, g]
    if op == "sub":
        return [g, -g]
    if op == "mul":
        return [g * vals[1], g * vals[0]]
    if op == "matmul":
        a, b = vals
        ga = g @ b.T if node.inputs[0].requires_grad else None
        gb = a.T @ g if node.inputs[1].requires_grad else None
        return [ga, gb]
    if op == "add_bias":
        return [g, g.sum(axis=0)]
    if op == "sigmoid":
        s = node.value
        return [g * s * (1.0 - s)]
    if op == "tanh":
        t = node.value
        return [g * (1.0 - t * t)]
    if op == "relu":
        return [g * (vals[0] > 0.0)]
    if op == "log":
        return [g / vals[0]]
    if op == "square":
        return [2.0 * g * vals[0]]
    if op == "sqrt":
        return [g * 0.5 / node.value]
    if op == "mean":
        return [np.full(vals[0].shape, g / vals[0].size)]
    if op == "sum":
        return [np.full(vals[0].shape, float(g))]
    if op == "sum_rows":
        return [np.repeat(g[:, None], vals[0].shape[1], axis=1)]
    if op == "scale":
        return [node.attrs * g]
    if op == "add_scalar":
        return [g]
    if op == "clamp_min":
        return [g * (vals[0] > node.attrs)]
    if op == "transpose":
        return [g.T]
    raise ValueError(f"unknown operation kind {op!r}")


class Tape:
    """Single-owner recording of a computation graph."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def reset(self) -> None:
        self.nodes = []

    def _push(self, op: str, inputs: tuple[Node, ...], attrs=None) -> Node:
        for inp in inputs:
            if inp.tape is not self:
                raise ValueError(f"{op}: operand {inp!r} belongs to another tape")
        try:
            value = _fwd(op, [i.value for i in inputs], attrs)
        except ValueError as exc:
            raise type(exc)(f"node #{len(self.nodes)}: {exc}") from None
        node = Node(self, len(self.nodes), op, inputs, value, attrs=attrs,
                    requires_grad=any(i.requires_grad for i in inputs))
        self.nodes.append(node)
        return node

    # leaves
    def leaf(self, name: str, value) -> Node:
        """Named differentiable input; gradients are reported under ``name``."""
        node = Node(self, len(self.nodes), "leaf", (), np.array(value, dtype=np.float64),
                    name=name, requires_grad=True)
        self.nodes.append(node)
        return node

    def const(self, value) -> Node:
        node = Node(self, len(self.nodes), "const", (), np.asarray(value, dtype=np.float64))
        self.nodes.append(node)
        return node

    # operations
    def add(self, a: Node, b: Node) -> Node:
        return self._push("add", (a, b))

    def sub(self, a: Node, b: Node) -> Node:
        return self._push("sub", (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        return self._push("mul", (a, b))

    def matmul(self, a: Node, b: Node) -> Node:
        return self._push("matmul", (a, b))

    def add_bias(self, x: Node, b: Node) -> Node:
        return self._push("add_bias", (x, b))

    def sigmoid(self, x: Node) -> Node:
        return self._push("sigmoid", (x,))

    def tanh(self, x: Node) -> Node:
        return self._push("tanh", (x,))

    def relu(self, x: Node) -> Node:
        return self._push("relu", (x,))

    def log(self, x: Node) -> Node:
        return self._push("log", (x,))

    def square(self, x: Node) -> Node:
        return self._push("square", (x,))

    def sqrt(self, x: Node) -> Node:
        return self._push("sqrt", (x,))

    def mean(self, x: Node) -> Node:
        return self._push("mean", (x,))

    def sum(self, x: Node) -> Node:
        return self._push("sum", (x,))

    def sum_rows(self, x: Node) -> Node:
        """Row sums of a 2-D node, giving a 1-D node of batch length."""
        return self._push("sum_rows", (x,))

    def scale(self, x: Node, c: float) -> Node:
        return self._push("scale", (x,), float(c))

    def add_scalar(self, x: Node, c: float) -> Node:
        return self._push("add_scalar", (x,), float(c))

    def clamp_min(self, x: Node, floor: float) -> Node:
        return self._push("clamp_min", (x,), float(floor))

    def transpose(self, x: Node) -> Node:
        return self._push("transpose", (x,))


def forward(tape: Tape, leaf_bindings: dict[str, np.ndarray] | None = None,
            root: Node | None = None) -> np.ndarray:
    """Re-evaluate the recorded graph, optionally rebinding named leaves.

    Returns the value of ``root`` (the last recorded node by default).
    """
    leaf_bindings = dict(leaf_bindings or {})
    leaves = {n.name: n for n in tape.nodes if n.op == "leaf"}
    unknown = set(leaf_bindings) - set(leaves)
    if unknown:
        raise KeyError(f"no leaves named {sorted(unknown)}")
    for name, value in leaf_bindings.items():
        value = np.array(value, dtype=np.float64)
        if value.shape != leaves[name].value.shape:
            raise ShapeError(f"leaf {name!r}: bound shape {value.shape} != recorded {leaves[name].value.shape}")
        leaves[name].value = value
    for node in tape.nodes:
        if node.op in ("leaf", "const"):
            continue
        try:
            node.value = _fwd(node.op, [i.value for i in node.inputs], node.attrs)
        except ValueError as exc:
            raise type(exc)(f"node #{node.index}: {exc}") from None
    if not tape.nodes:
        raise ValueError("empty tape")
    return (root or tape.nodes[-1]).value


def backward(tape: Tape, root: Node, seed: float = 1.0) -> dict[str, np.ndarray]:
    """Gradient of scalar ``root`` with respect to every named leaf."""
    if root.tape is not tape:
        raise ValueError("root does not belong to this tape")
    if root.value.ndim != 0:
        raise ValueError(f"backward needs a scalar root, got shape {root.value.shape}")
    nodes = tape.nodes
    for node in nodes:
        node.adjoint = None
    root.adjoint = np.asarray(float(seed))
    for node in reversed(nodes[: root.index + 1]):
        g = node.adjoint
        if g is None or not node.inputs:
            continue
        contribs = _bwd(node, [i.value for i in node.inputs], g)
        for inp, c in zip(node.inputs, contribs):
            if c is None or not inp.requires_grad:
                continue
            inp.adjoint = c if inp.adjoint is None else inp.adjoint + c
    grads = {}
    for node in nodes:
        if node.op == "leaf":
            if node.adjoint is None:
                node.adjoint = np.zeros_like(node.value)
            grads[node.name] = node.adjoint
    return grads


def grad_check(scalar_function: Callable[[Tape, Node], Node], params: np.ndarray,
               step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``scalar_function(tape, p)`` must build a scalar root from leaf ``p``.
    Each coordinate's error is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = np.array(params, dtype=np.float64)
    tape = Tape()
    root = scalar_function(tape, tape.leaf("p", params))
    analytic = backward(tape, root)["p"].ravel()

    def value_at(p: np.ndarray) -> float:
        t = Tape()
        return float(scalar_function(t, t.leaf("p", p)).value)

    flat = params.ravel()
    worst = 0.0
    for k in range(flat.size):
        hi = flat.copy()
        lo = flat.copy()
        hi[k] += step
        lo[k] -= step
        numeric = (value_at(hi.reshape(params.shape)) - value_at(lo.reshape(params.shape))) / (2 * step)
        err = abs(analytic[k] - numeric) / max(1.0, abs(analytic[k]))
        worst = max(worst, err)
    return worst
