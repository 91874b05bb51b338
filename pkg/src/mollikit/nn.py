"""Small neural-network building blocks on top of :mod:`mollikit.autodiff`."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "softplus": ad.softplus,
}


class Module:
    """Parameter container.

    Parameters are discovered by walking instance attributes in insertion
    order, recursing into child modules and lists of modules, so the order of
    :meth:`named_parameters` is stable and reproducible.
    """

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        """Non-trainable state that still belongs in a checkpoint."""
        for key in getattr(self, "_buffers", ()):
            yield f"{prefix}{key}", getattr(self, key)
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield from val.named_buffers(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{key}.{i}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, zero: bool = False):
        if zero:
            w, b = np.zeros((n_in, n_out)), np.zeros(n_out)
        else:
            w = _uniform_init(rng, n_in, (n_in, n_out))
            b = _uniform_init(rng, n_in, (n_out,))
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(b, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add_bias(ad.matmul(x, self.weight), self.bias)


class MaskedLinear(Linear):
    """Linear layer whose weight is multiplied elementwise by a fixed 0/1 mask."""

    def __init__(self, n_in: int, n_out: int, mask: np.ndarray, rng: np.random.Generator,
                 zero: bool = False):
        super().__init__(n_in, n_out, rng, zero=zero)
        if mask.shape != (n_in, n_out):
            raise ad.ShapeError("MaskedLinear", mask.shape, (n_in, n_out))
        self.mask = np.asarray(mask, dtype=np.float64)
        self.weight.data *= self.mask

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add_bias(ad.matmul(x, ad.mul(self.weight, self.mask)), self.bias)


class MLP(Module):
    """Fully connected net; the last layer is linear (no activation)."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, activation: str = "relu",
                 zero_last: bool = False):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.activation = activation
        n = len(sizes) - 1
        self.layers = [
            Linear(sizes[i], sizes[i + 1], rng, zero=zero_last and i == n - 1) for i in range(n)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        act = ACTIVATIONS[self.activation]
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = act(h)
        return h
