"""Dense-tensor reverse-mode autodiff engine.

Arrays are float64 throughout. Each Tensor op records its parents and a
closure that pushes the upstream gradient back onto them; ``backward`` walks
the recorded graph in reverse topological order. Broadcasting follows numpy
rules (2-D needs only), with gradients summed back over broadcast axes.
"""

from __future__ import annotations

import math

import numpy as np

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

LEAKY_SLOPE = 0.2  # conventional GAT negative slope


def _unbroadcast(grad, shape):
    """Sum ``grad`` back down to ``shape`` after a broadcast op."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # backward machinery

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    # ------------------------------------------------------------------
    # arithmetic

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._lift(other)
        out_data = self.data + other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g, other.data.shape))

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    __radd__ = __add__

    def __neg__(self):
        def bwd(g):
            self._accum(-g)

        return Tensor(-self.data, _parents=(self,), _backward=bwd)

    def __sub__(self, other):
        other = Tensor._lift(other)
        out_data = self.data - other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(-g, other.data.shape))

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        other = Tensor._lift(other)
        out_data = self.data * other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.data.shape))

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        out_data = self.data / other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accum(
                    _unbroadcast(-g * self.data / other.data**2, other.data.shape)
                )

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents supported")
        out_data = self.data**p

        def bwd(g):
            self._accum(g * p * self.data ** (p - 1))

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def __matmul__(self, other):
        other = Tensor._lift(other)
        out_data = self.data @ other.data

        def bwd(g):
            if self.requires_grad:
                self._accum(g @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ g)

        return Tensor(out_data, _parents=(self, other), _backward=bwd)

    # ------------------------------------------------------------------
    # reductions and reshaping

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accum(np.broadcast_to(gg, self.data.shape).copy())

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        out_data = self.data.reshape(*shape)
        old = self.data.shape

        def bwd(g):
            self._accum(g.reshape(old))

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def gather_rows(self, idx):
        """Select rows by integer index; duplicates scatter-add on backward."""
        idx = np.asarray(idx, dtype=np.intp)
        out_data = self.data[idx]

        def bwd(g):
            acc = np.zeros_like(self.data)
            np.add.at(acc, idx, g)
            self._accum(acc)

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    # ------------------------------------------------------------------
    # elementwise nonlinearities

    def exp(self):
        out_data = np.exp(self.data)

        def bwd(g):
            self._accum(g * out_data)

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def log(self):
        out_data = np.log(self.data)

        def bwd(g):
            self._accum(g / self.data)

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def bwd(g):
            self._accum(g * 0.5 / out_data)

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def sigmoid(self):
        from scipy.special import expit

        out_data = expit(self.data)

        def bwd(g):
            self._accum(g * out_data * (1.0 - out_data))

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def gelu(self):
        # exact Gaussian-CDF form; derivative at 0 is exactly 0.5
        from scipy.special import erf

        phi = 0.5 * (1.0 + erf(self.data / SQRT2))
        out_data = self.data * phi

        def bwd(g):
            pdf = INV_SQRT_2PI * np.exp(-0.5 * self.data**2)
            self._accum(g * (phi + self.data * pdf))

        return Tensor(out_data, _parents=(self,), _backward=bwd)

    def leaky_relu(self, slope=LEAKY_SLOPE):
        pos = self.data >= 0
        out_data = np.where(pos, self.data, slope * self.data)

        def bwd(g):
            self._accum(g * np.where(pos, 1.0, slope))

        return Tensor(out_data, _parents=(self,), _backward=bwd)


def concat(tensors, axis=1):
    tensors = [Tensor._lift(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        parts = np.split(g, splits, axis=axis)
        for t, p in zip(tensors, parts):
            if t.requires_grad:
                t._accum(p)

    return Tensor(out_data, _parents=tuple(tensors), _backward=bwd)


def segment_sum(values: Tensor, segment_ids, num_segments) -> Tensor:
    """Sum rows of ``values`` into ``num_segments`` buckets."""
    values = Tensor._lift(values)
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape[0] != values.data.shape[0]:
        raise ValueError("segment_ids must have one entry per row")
    out_shape = (num_segments,) + values.data.shape[1:]
    out_data = np.zeros(out_shape)
    np.add.at(out_data, seg, values.data)

    def bwd(g):
        values._accum(g[seg])

    return Tensor(out_data, _parents=(values,), _backward=bwd)


def segment_softmax(logits: Tensor, segment_ids) -> Tensor:
    """Softmax normalized independently within each segment.

    ``logits`` is 1-D; segment ids need not be sorted. An id that appears
    once yields weight 1. Ids present in ``segment_ids`` define the segments;
    empty segments cannot arise by construction.
    """
    logits = Tensor._lift(logits)
    if logits.data.ndim != 1:
        raise ValueError("segment_softmax expects 1-D logits")
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape != logits.data.shape:
        raise ValueError("logits and segment_ids must have the same length")
    if seg.size == 0:
        raise ValueError("empty segment list")
    nseg = int(seg.max()) + 1
    # stabilize with a per-segment max
    seg_max = np.full(nseg, -np.inf)
    np.maximum.at(seg_max, seg, logits.data)
    shifted = np.exp(logits.data - seg_max[seg])
    denom = np.zeros(nseg)
    np.add.at(denom, seg, shifted)
    out_data = shifted / denom[seg]

    def bwd(g):
        dot = np.zeros(nseg)
        np.add.at(dot, seg, g * out_data)
        logits._accum(out_data * (g - dot[seg]))

    return Tensor(out_data, _parents=(logits,), _backward=bwd)


def grad(output: Tensor, params):
    """Gradients of a scalar ``output`` with respect to each param tensor.

    Returns a dict keyed by id(param). Params left untouched by the graph
    get a zero gradient only if they fed the output; a param that is not on
    the recorded graph at all is an error.
    """
    params = list(params)
    if output.data.size != 1:
        raise ValueError("output must be scalar")
    reachable = set()
    stack = [output]
    while stack:
        node = stack.pop()
        if id(node) in reachable:
            continue
        reachable.add(id(node))
        stack.extend(node._parents)
    for p in params:
        if id(p) not in reachable:
            raise ValueError("param is not on the computation graph")
    for p in params:
        p.zero_grad()
    output.backward()
    return {id(p): Tensor(p.grad if p.grad is not None else np.zeros_like(p.data)) for p in params}
