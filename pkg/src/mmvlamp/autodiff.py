"""Reverse-mode differentiation tape for small complex matrix graphs.

Values are float64 or complex128 ndarrays. Matrix nodes are (m, n) or
(batch, m, n); scalar nodes are () or (batch,). Parameters shared across the
batch receive batch-summed gradients.

Gradient convention: for a real scalar loss L and a complex node X the
adjoint is the single complex array dL/dRe(X) + j*dL/dIm(X); for a real node
it is the plain real array dL/dX. Every backward rule below is the exact
vector-Jacobian product under that convention.

The tape is rebuilt every forward pass; values are computed eagerly at
record time and cached on the node, so one reversed sweep visiting each node
once yields all gradients.
"""

import numpy as np

from .errors import ContractError, ShapeError
from .solvers import _shrinkage_forward, _shrinkage_vjp

_LEAF_OPS = ("const", "param")


def _ct(x):
    return np.swapaxes(x, -1, -2).conj()


def _match(grad, value):
    """Reduce broadcast batch axes and project onto a real node's tangent space."""
    grad = np.asarray(grad)
    while grad.ndim > value.ndim:
        grad = grad.sum(axis=0)
    for axis, n in enumerate(value.shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    if not np.iscomplexobj(value) and np.iscomplexobj(grad):
        grad = grad.real
    return grad


class Node:
    __slots__ = ("tape", "idx", "op", "value", "parents", "attrs", "trainable", "name")

    def __init__(self, tape, idx, op, value, parents, attrs, trainable, name):
        self.tape = tape
        self.idx = idx
        self.op = op
        self.value = value
        self.parents = parents
        self.attrs = attrs
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.idx}, {self.op}, shape={self.value.shape})"


class Tape:
    """Recorded computation graph of one forward pass."""

    def __init__(self):
        self.nodes = []
        self.backward_visits = 0

    # ------------------------------------------------------------------ leaves

    def _append(self, op, value, parents, attrs=None, trainable=False, name=None):
        value = np.asarray(value)
        if value.dtype not in (np.float64, np.complex128):
            value = value.astype(np.complex128 if np.iscomplexobj(value) else np.float64)
        # one reduce instead of an elementwise isfinite pass; any NaN/Inf
        # in the operand poisons the sum
        if not np.isfinite(value.sum()):
            raise ContractError(f"{op}: non-finite forward value")
        node = Node(self, len(self.nodes), op, value, parents, attrs or {}, trainable, name)
        self.nodes.append(node)
        return node

    def const(self, value, name=None):
        return self._append("const", value, (), name=name)

    def param(self, value, name=None, trainable=True):
        return self._append("param", value, (), trainable=trainable, name=name)

    # ------------------------------------------------------------------ record

    def record(self, kind, inputs, **attrs):
        """Append one primitive; the forward value is computed immediately."""
        inputs = tuple(inputs)
        for node in inputs:
            if node.tape is not self:
                raise ContractError(f"{kind}: input node belongs to a different tape")
        vals = [n.value for n in inputs]

        if kind == "identity":
            value = vals[0]
        elif kind == "matmul":
            a, b = vals
            if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
                raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
            value = a @ b
        elif kind in ("add", "sub"):
            a, b = vals
            try:
                np.broadcast_shapes(a.shape, b.shape)
            except ValueError:
                raise ShapeError(f"{kind}: {a.shape} vs {b.shape}") from None
            value = a + b if kind == "add" else a - b
        elif kind == "scale":
            factor = np.asarray(attrs["factor"])
            try:
                np.broadcast_shapes(vals[0].shape, factor.shape)
            except ValueError:
                raise ShapeError(f"scale: {vals[0].shape} vs factor {factor.shape}") from None
            value = vals[0] * factor
        elif kind == "conjt":
            if vals[0].ndim < 2:
                raise ShapeError("conjt: needs a matrix node")
            value = _ct(vals[0])
        elif kind == "transpose":
            if vals[0].ndim < 2:
                raise ShapeError("transpose: needs a matrix node")
            value = np.swapaxes(vals[0], -1, -2)
        elif kind == "phasor":
            if np.iscomplexobj(vals[0]):
                raise ContractError("phasor: phase input must be real")
            sign = attrs.get("sign", 1.0)
            value = attrs.get("factor", 1.0) * np.exp(1j * sign * vals[0])
        elif kind == "fronorm":
            if vals[0].ndim < 2:
                raise ShapeError("fronorm: needs a matrix node")
            value = np.sqrt(np.sum(vals[0].real**2 + vals[0].imag**2, axis=(-2, -1)))
        elif kind == "rownorms":
            if vals[0].ndim < 2:
                raise ShapeError("rownorms: needs a matrix node")
            value = np.sqrt(np.sum(vals[0].real**2 + vals[0].imag**2, axis=-1))
        elif kind == "square":
            value = vals[0] * vals[0]
        elif kind == "sumall":
            value = vals[0].sum()
        elif kind == "shrinkage":
            r, th1, th2, sigma = vals
            if r.ndim < 2:
                raise ShapeError("shrinkage: needs a matrix node")
            if th1.shape != () or th2.shape != ():
                raise ShapeError("shrinkage: theta nodes must be scalars")
            value, cache = _shrinkage_forward(r, float(th1), float(th2), sigma)
            attrs = dict(attrs, cache=cache)
        else:
            raise ContractError(f"unknown op kind {kind!r}")
        return self._append(kind, value, inputs, attrs)

    # ------------------------------------------------------- convenience sugar

    def identity(self, a):
        return self.record("identity", (a,))

    def matmul(self, a, b):
        return self.record("matmul", (a, b))

    def add(self, a, b):
        return self.record("add", (a, b))

    def sub(self, a, b):
        return self.record("sub", (a, b))

    def scale(self, a, factor):
        return self.record("scale", (a,), factor=factor)

    def conjt(self, a):
        return self.record("conjt", (a,))

    def transpose(self, a):
        return self.record("transpose", (a,))

    def phasor(self, xi, factor=1.0, sign=1.0):
        return self.record("phasor", (xi,), factor=factor, sign=sign)

    def fronorm(self, a):
        return self.record("fronorm", (a,))

    def rownorms(self, a):
        return self.record("rownorms", (a,))

    def square(self, a):
        return self.record("square", (a,))

    def sumall(self, a):
        return self.record("sumall", (a,))

    def shrinkage(self, r, theta1, theta2, sigma):
        return self.record("shrinkage", (r, theta1, theta2, sigma))

    # ------------------------------------------------------------------ reverse

    def vjp(self, node, seed):
        """Pull the cotangent ``seed`` at ``node`` back to every trainable leaf."""
        seed = np.asarray(seed)
        if seed.shape != node.value.shape:
            raise ShapeError(f"vjp: seed shape {seed.shape} != node shape {node.value.shape}")
        adjoint = {node.idx: _match(seed, node.value)}
        for n in reversed(self.nodes[: node.idx + 1]):
            if n.idx not in adjoint or n.op in _LEAF_OPS:
                continue
            grad = adjoint.pop(n.idx)
            self.backward_visits += 1
            for parent, contrib in zip(n.parents, _vjp_rules(n, grad)):
                if contrib is None:
                    continue
                contrib = _match(contrib, parent.value)
                if parent.idx in adjoint:
                    adjoint[parent.idx] = adjoint[parent.idx] + contrib
                else:
                    adjoint[parent.idx] = contrib
        grads = {}
        for n in self.nodes:
            if n.trainable:
                g = adjoint.get(n.idx)
                if g is None:
                    g = np.zeros_like(n.value)
                grads[n] = np.asarray(g)
        return grads

    def backprop(self, loss):
        """Gradients of a real scalar loss node for every trainable parameter."""
        if loss.value.shape != ():
            raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
        if np.iscomplexobj(loss.value):
            raise ContractError("loss must be real-valued")
        return self.vjp(loss, np.float64(1.0))


def backprop(tape, loss):
    """Module-level alias of Tape.backprop."""
    return tape.backprop(loss)


def _vjp_rules(node, grad):
    """Per-primitive vector-Jacobian products; one entry per parent."""
    kind = node.op
    vals = [p.value for p in node.parents]
    if kind == "identity":
        return (grad,)
    if kind == "matmul":
        a, b = vals
        return (grad @ _ct(b), _ct(a) @ grad)
    if kind == "add":
        return (grad, grad)
    if kind == "sub":
        return (grad, -grad)
    if kind == "scale":
        return (np.conj(node.attrs["factor"]) * grad,)
    if kind == "conjt":
        return (_ct(grad),)
    if kind == "transpose":
        return (np.swapaxes(grad, -1, -2),)
    if kind == "phasor":
        sign = node.attrs.get("sign", 1.0)
        return (-sign * np.imag(node.value * np.conj(grad)),)
    if kind == "fronorm":
        safe = np.where(node.value > 0.0, node.value, 1.0)
        return ((grad / safe)[..., None, None] * vals[0],)
    if kind == "rownorms":
        safe = np.where(node.value > 0.0, node.value, 1.0)
        return ((grad / safe)[..., None] * vals[0],)
    if kind == "square":
        return (2.0 * np.conj(vals[0]) * grad,)
    if kind == "sumall":
        return (np.broadcast_to(grad, vals[0].shape),)
    if kind == "shrinkage":
        g_r, g_t1, g_t2, g_sig = _shrinkage_vjp(node.attrs["cache"], grad)
        return (g_r, np.float64(g_t1), np.float64(g_t2), np.asarray(g_sig))
    raise ContractError(f"no backward rule for {kind!r}")
