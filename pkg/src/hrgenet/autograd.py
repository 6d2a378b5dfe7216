"""Reverse-mode automatic differentiation over dense float64 arrays.

A `Tensor` wraps a numpy array and remembers how it was produced; calling
``backward()`` on a scalar loss walks the graph in reverse topological order
and accumulates gradients into every node's ``grad`` buffer.  The op set is
deliberately small: exactly what the relational embedding network and its
classifier head need.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    EmptyInputError,
    LabelError,
    ShapeMismatchError,
    StaleGraphError,
)


class Tensor:
    """A node in a dynamically built computation graph (float64 only)."""

    __slots__ = ("data", "grad", "_parents", "_grad_fn", "_spent")

    def __init__(self, data, _parents=(), _grad_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._grad_fn = _grad_fn
        self._spent = False

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        """Accumulate d(self)/d(node) into every reachable node's grad."""
        if self.data.size != 1:
            raise ShapeMismatchError(
                f"backward needs a scalar, got shape {self.shape}"
            )
        order = _toposort(self)
        for node in order:
            if node._grad_fn is not None and node._spent:
                raise StaleGraphError(
                    "backward was already run on this graph; "
                    "rerun the forward pass first"
                )
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._grad_fn is not None:
                node._spent = True
                node._grad_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def _toposort(root):
    order, seen = [], set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, _parents=(a, b))

    def _backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    out._grad_fn = _backward
    return out


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * c, _parents=(a,))
    out._grad_fn = lambda g: a._accumulate(g * c)
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    out = Tensor(np.where(mask, a.data, 0.0), _parents=(a,))
    out._grad_fn = lambda g: a._accumulate(g * mask)
    return out


def maximum(a, b) -> Tensor:
    """Element-wise max; ties route the gradient to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    mask = a.data >= b.data
    out = Tensor(np.where(mask, a.data, b.data), _parents=(a, b))

    def _backward(g):
        a._accumulate(g * mask)
        b._accumulate(g * ~mask)

    out._grad_fn = _backward
    return out


def affine(x, weight, bias) -> Tensor:
    """x @ weight.T + bias, with weight of shape (out, in)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 2:
        raise ShapeMismatchError(f"affine input must be 2-D, got {x.shape}")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ShapeMismatchError(
            f"input has {x.data.shape[1]} columns but weight expects "
            f"{weight.data.shape[1]}"
        )
    out = Tensor(x.data @ weight.data.T + bias.data, _parents=(x, weight, bias))

    def _backward(g):
        x._accumulate(g @ weight.data)
        weight._accumulate(g.T @ x.data)
        bias._accumulate(g.sum(axis=0))

    out._grad_fn = _backward
    return out


def take_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(a.data[idx], _parents=(a,))

    def _backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        a._accumulate(ga)

    out._grad_fn = _backward
    return out


def segment_sum_rows(a, segments, num_segments: int) -> Tensor:
    """Sum rows of `a` per segment id.

    Rows inside each segment are added in a canonical (lexicographically
    sorted) order, so the result is bit-identical under any permutation of
    the rows feeding a segment.  Every segment must be non-empty.
    """
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.intp)
    counts = np.bincount(segments, minlength=num_segments)
    if np.any(counts == 0):
        raise EmptyInputError("segment_sum_rows requires non-empty segments")
    keys = [a.data[:, c] for c in range(a.data.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys + [segments])
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    out = Tensor(
        np.add.reduceat(a.data[order], starts, axis=0), _parents=(a,)
    )
    out._grad_fn = lambda g: a._accumulate(g[segments])
    return out


def concat_cols(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    widths = [t.data.shape[1] for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1),
                 _parents=tuple(tensors))

    def _backward(g):
        off = 0
        for t, w in zip(tensors, widths):
            t._accumulate(g[:, off:off + w])
            off += w

    out._grad_fn = _backward
    return out


def concat_vecs(tensors) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[0] for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors]),
                 _parents=tuple(tensors))

    def _backward(g):
        off = 0
        for t, n in zip(tensors, sizes):
            t._accumulate(g[off:off + n])
            off += n

    out._grad_fn = _backward
    return out


def stack_rows(tensors) -> Tensor:
    """Stack 1-D tensors into a matrix, one per row."""
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors]), _parents=tuple(tensors))

    def _backward(g):
        for k, t in enumerate(tensors):
            t._accumulate(g[k])

    out._grad_fn = _backward
    return out


def maxpool_rows(a):
    """Column-wise max over rows.

    Returns ``(tensor, argmax)`` where argmax holds the first maximal row
    index per column; the gradient is routed there exclusively.
    """
    a = as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] < 1:
        raise EmptyInputError(f"maxpool_rows needs a non-empty matrix, got {a.shape}")
    arg = a.data.argmax(axis=0)
    cols = np.arange(a.data.shape[1])
    out = Tensor(a.data[arg, cols], _parents=(a,))

    def _backward(g):
        ga = np.zeros_like(a.data)
        ga[arg, cols] = g
        a._accumulate(ga)

    out._grad_fn = _backward
    return out, arg


DEGENERATE_NORM = 1e-12


def l2_normalize(v):
    """Scale a 1-D tensor to unit norm.

    Returns ``(tensor, degenerate)``; when the norm is below
    ``DEGENERATE_NORM`` the input passes through unchanged and the flag
    is set instead of raising.
    """
    v = as_tensor(v)
    norm = float(np.linalg.norm(v.data))
    if norm < DEGENERATE_NORM:
        out = Tensor(v.data.copy(), _parents=(v,))
        out._grad_fn = lambda g: v._accumulate(g)
        return out, True
    unit = v.data / norm
    out = Tensor(unit, _parents=(v,))

    def _backward(g):
        v._accumulate(g / norm - unit * (unit @ g) / norm)

    out._grad_fn = _backward
    return out, False


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of softmaxed logits against integer labels.

    Stabilized via log-sum-exp; the backward pass uses the closed form
    (softmax - one_hot) / batch.
    """
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeMismatchError(f"logits must be 2-D, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    batch, num_classes = logits.data.shape
    if labels.shape != (batch,):
        raise ShapeMismatchError(
            f"expected {batch} labels, got shape {labels.shape}"
        )
    for k, lab in enumerate(labels):
        if not 0 <= lab < num_classes:
            raise LabelError(
                f"label {lab} at index {k} outside [0, {num_classes})"
            )
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss_val = np.mean(lse - shifted[np.arange(batch), labels])
    probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
    out = Tensor(loss_val, _parents=(logits,))

    def _backward(g):
        grad = probs.copy()
        grad[np.arange(batch), labels] -= 1.0
        logits._accumulate(grad * (float(g) / batch))

    out._grad_fn = _backward
    return out
