"""Parameterized dense layers built on the autograd core."""

from __future__ import annotations

import math

import numpy as np

from .autograd import Tensor, affine, as_tensor, relu
from .errors import ShapeMismatchError


def _default_rng(rng):
    if rng is None:
        return np.random.default_rng(0)
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    return rng


class LinearLayer:
    """Affine map y = x W^T + b with He-style uniform fan-in init."""

    def __init__(self, in_dim: int, out_dim: int, rng=None):
        if in_dim < 1 or out_dim < 1:
            raise ShapeMismatchError(
                f"layer dims must be positive, got {in_dim}x{out_dim}"
            )
        rng = _default_rng(rng)
        limit = math.sqrt(6.0 / in_dim)
        self.weight = Tensor(rng.uniform(-limit, limit, size=(out_dim, in_dim)))
        self.bias = Tensor(np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weight.data.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[0]

    @property
    def grad_weight(self):
        return self.weight.grad

    @property
    def grad_bias(self):
        return self.bias.grad

    def parameters(self):
        return [self.weight, self.bias]

    def zero_grad(self):
        self.weight.zero_grad()
        self.bias.zero_grad()


def linear_forward(layer: LinearLayer, x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != layer.in_dim:
        raise ShapeMismatchError(
            f"input of shape {x.shape} does not match layer "
            f"({layer.out_dim} x {layer.in_dim})"
        )
    return affine(x, layer.weight, layer.bias)


class Mlp:
    """Stack of linear layers with a rectifier between them.

    The activation applies between consecutive layers only; the final
    layer's output is left affine.
    """

    def __init__(self, dims, rng=None):
        if len(dims) < 2:
            raise ShapeMismatchError("an MLP needs at least one layer")
        rng = _default_rng(rng)
        self.layers = [
            LinearLayer(dims[k], dims[k + 1], rng) for k in range(len(dims) - 1)
        ]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()


def mlp_forward(mlp: Mlp, x) -> Tensor:
    out = as_tensor(x)
    last = len(mlp.layers) - 1
    for k, layer in enumerate(mlp.layers):
        out = linear_forward(layer, out)
        if k < last:
            out = relu(out)
    return out
