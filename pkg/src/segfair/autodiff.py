"""Minimal reverse-mode differentiation over dense 2-D float64 matrices.

A :class:`Tape` records every gradient-carrying :class:`Value` in creation
order, which is a topological order of the computation graph; the backward
pass walks the record in reverse so each node's gradient is complete before
it is propagated to its parents.  Gradients accumulate additively into
shared parents.

Every array is 2-D: scalars are (1, 1), vectors are explicit rows (1, k)
or columns (k, 1).  Elementwise operations broadcast a row or column
vector against a matrix (nothing beyond that), and the backward pass sums
gradients over the broadcast axes.

Numerical guards: ``log`` inputs and division denominators are clamped to
at least 1e-12, forward and backward consistently, so saturated sigmoids
cannot produce non-finite losses.
"""

from __future__ import annotations

import numpy as np

CLAMP = 1e-12


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Value:
    """A node of the computation graph: data, gradient, and provenance."""

    __slots__ = ("data", "grad", "op", "parents", "requires_grad", "_backward")

    def __init__(self, data, op="const", parents=(), requires_grad=False):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        if data.ndim != 2:
            raise ShapeMismatchError(
                f"values must be 2-D matrices (scalars as (1, 1)); got shape {data.shape}"
            )
        self.data = data
        self.grad = np.zeros_like(data)
        self.op = op
        self.parents = tuple(parents)
        self.requires_grad = requires_grad
        self._backward = None

    @classmethod
    def param(cls, data) -> "Value":
        # copy so optimizer updates never alias (possibly frozen) caller arrays
        return cls(np.array(data, dtype=np.float64), op="param", requires_grad=True)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() on non-scalar shape {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Value(op={self.op!r}, shape={self.shape})"


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] > 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] > 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _broadcastable(a, b):
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def _clamped(x):
    return np.maximum(x, CLAMP)


class Tape:
    """Ordered record of gradient-carrying values; single-threaded."""

    def __init__(self):
        self._nodes: list[Value] = []
        self._backward_done = False

    def constant(self, data) -> Value:
        return data if isinstance(data, Value) else Value(data)

    def _emit(self, data, op, parents, backward) -> Value:
        needs = any(p.requires_grad for p in parents)
        v = Value(data, op=op, parents=parents, requires_grad=needs)
        if needs:
            v._backward = backward
            self._nodes.append(v)
        return v

    def backward(self, root: Value) -> None:
        """Populate gradients of every ancestor of a scalar ``root``."""
        if root.shape != (1, 1):
            raise ShapeMismatchError(f"backward root must be a scalar, got {root.shape}")
        if self._backward_done:
            raise RuntimeError(
                "backward already ran on this tape; zero gradients and build a new tape"
            )
        self._backward_done = True
        root.grad[...] = 1.0
        for v in reversed(self._nodes):
            if v._backward is not None:
                v._backward(v.grad)

    # -- elementwise ----------------------------------------------------

    def _elementwise_check(self, a, b, op):
        if not _broadcastable(a.shape, b.shape):
            raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")

    def add(self, a, b) -> Value:
        a, b = self.constant(a), self.constant(b)
        self._elementwise_check(a, b, "add")

        def backward(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g, a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g, b.shape)

        return self._emit(a.data + b.data, "add", (a, b), backward)

    def sub(self, a, b) -> Value:
        a, b = self.constant(a), self.constant(b)
        self._elementwise_check(a, b, "sub")

        def backward(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g, a.shape)
            if b.requires_grad:
                b.grad -= _unbroadcast(g, b.shape)

        return self._emit(a.data - b.data, "sub", (a, b), backward)

    def mul(self, a, b) -> Value:
        a, b = self.constant(a), self.constant(b)
        self._elementwise_check(a, b, "mul")

        def backward(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g * b.data, a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g * a.data, b.shape)

        return self._emit(a.data * b.data, "mul", (a, b), backward)

    def div(self, a, b) -> Value:
        a, b = self.constant(a), self.constant(b)
        self._elementwise_check(a, b, "div")
        denom = _clamped(b.data)
        out = a.data / denom

        def backward(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g / denom, a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(-g * out / denom, b.shape)

        return self._emit(out, "div", (a, b), backward)

    def scale(self, a, c: float) -> Value:
        a = self.constant(a)
        c = float(c)

        def backward(g):
            if a.requires_grad:
                a.grad += c * g

        return self._emit(c * a.data, "scale", (a,), backward)

    # -- nonlinearities --------------------------------------------------

    def sigmoid(self, a) -> Value:
        a = self.constant(a)
        x = a.data
        out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g):
            if a.requires_grad:
                a.grad += g * out * (1.0 - out)

        return self._emit(out, "sigmoid", (a,), backward)

    def relu(self, a) -> Value:
        a = self.constant(a)
        mask = a.data > 0

        def backward(g):
            if a.requires_grad:
                a.grad += g * mask

        return self._emit(np.where(mask, a.data, 0.0), "relu", (a,), backward)

    def log(self, a) -> Value:
        a = self.constant(a)
        clamped = _clamped(a.data)

        def backward(g):
            if a.requires_grad:
                a.grad += g / clamped

        return self._emit(np.log(clamped), "log", (a,), backward)

    def exp(self, a) -> Value:
        a = self.constant(a)
        out = np.exp(a.data)

        def backward(g):
            if a.requires_grad:
                a.grad += g * out

        return self._emit(out, "exp", (a,), backward)

    # -- linear algebra / reductions --------------------------------------

    def matmul(self, a, b) -> Value:
        a, b = self.constant(a), self.constant(b)
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")

        def backward(g):
            if a.requires_grad:
                a.grad += g @ b.data.T
            if b.requires_grad:
                b.grad += a.data.T @ g

        return self._emit(a.data @ b.data, "matmul", (a, b), backward)

    def transpose(self, a) -> Value:
        a = self.constant(a)

        def backward(g):
            if a.requires_grad:
                a.grad += g.T

        return self._emit(a.data.T.copy(), "transpose", (a,), backward)

    def sum(self, a, axis=None) -> Value:
        a = self.constant(a)
        if axis not in (None, 0, 1):
            raise ShapeMismatchError(f"sum: axis must be None, 0 or 1, got {axis}")
        out = a.data.sum(keepdims=True) if axis is None else a.data.sum(axis=axis, keepdims=True)

        def backward(g):
            if a.requires_grad:
                a.grad += np.broadcast_to(g, a.shape)

        return self._emit(out, "sum", (a,), backward)

    def mean(self, a, axis=None) -> Value:
        a = self.constant(a)
        count = a.data.size if axis is None else a.shape[axis]
        return self.scale(self.sum(a, axis=axis), 1.0 / count)

    def concat_rows(self, values) -> Value:
        values = [self.constant(v) for v in values]
        cols = {v.shape[1] for v in values}
        if len(cols) != 1:
            raise ShapeMismatchError(f"concat_rows: column counts differ: {sorted(cols)}")
        offsets = np.cumsum([0] + [v.shape[0] for v in values])

        def backward(g):
            for v, lo, hi in zip(values, offsets[:-1], offsets[1:]):
                if v.requires_grad:
                    v.grad += g[lo:hi]

        return self._emit(np.vstack([v.data for v in values]), "concat_rows", tuple(values), backward)

    def gather_rows(self, a, indices) -> Value:
        a = self.constant(a)
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 1:
            raise ShapeMismatchError(f"gather_rows: indices must be 1-D, got {indices.shape}")

        def backward(g):
            if a.requires_grad:
                np.add.at(a.grad, indices, g)

        return self._emit(a.data[indices], "gather_rows", (a,), backward)

    def normalize_rows(self, a) -> Value:
        """L2-normalize each row; zero rows are clamped, not errors."""
        a = self.constant(a)
        norms = _clamped(np.linalg.norm(a.data, axis=1, keepdims=True))
        out = a.data / norms

        def backward(g):
            if a.requires_grad:
                inner = (g * out).sum(axis=1, keepdims=True)
                a.grad += (g - out * inner) / norms

        return self._emit(out, "normalize_rows", (a,), backward)

    def symmetric_adjacency(self, w, edge_u, edge_v, n: int) -> Value:
        """Scatter per-edge weights (m, 1) into a dense symmetric (n, n)."""
        w = self.constant(w)
        edge_u = np.asarray(edge_u, dtype=np.int64)
        edge_v = np.asarray(edge_v, dtype=np.int64)
        if w.shape != (edge_u.shape[0], 1):
            raise ShapeMismatchError(
                f"symmetric_adjacency: weights {w.shape} vs {edge_u.shape[0]} edges"
            )
        out = np.zeros((n, n))
        out[edge_u, edge_v] = w.data[:, 0]
        out[edge_v, edge_u] = w.data[:, 0]

        def backward(g):
            if w.requires_grad:
                w.grad[:, 0] += g[edge_u, edge_v] + g[edge_v, edge_u]

        return self._emit(out, "symmetric_adjacency", (w,), backward)


class Adam:
    """Adam with L2 weight decay folded into the gradient (classic Adam + L2)."""

    def __init__(self, params, lr=0.001, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = None
        self._v = None

    def step(self) -> None:
        if self._m is None:  # lazy moment initialization
            self._m = [np.zeros_like(p.data) for p in self.params]
            self._v = [np.zeros_like(p.data) for p in self.params]
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
