"""Exact-likelihood normalizing flows.

Every bijection maps the data side towards the base distribution
(``forward``), returning the transformed batch and the per-example log
absolute Jacobian determinant of that map.  ``inverse`` runs the generative
direction on plain arrays and is only used for sampling, so it records no
graph.

The density of a point is the standard-normal log-density of its latent
image plus the sum of the per-layer log-determinants.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Tensor
from .nn import ACTIVATIONS, MLP, MaskedLinear, Module

__all__ = [
    "AffineCoupling",
    "MaskedAutoregressive",
    "BatchNormBijection",
    "FlowModel",
    "FlowNumericError",
    "made_masks",
    "build_realnvp",
    "build_maf",
    "build_flow",
]

LOG_2PI = math.log(2.0 * math.pi)


class FlowNumericError(NumericError):
    def __init__(self, layer: int, cause: Exception):
        super().__init__(f"non-finite value in flow layer {layer}: {cause}")
        self.layer = layer


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class AffineCoupling(Module):
    """RealNVP affine coupling.

    Dimensions with ``mask == 1`` pass through unchanged and condition the
    scale ``s`` and shift ``t`` applied to the others:
    ``y_b = x_b * exp(s(x_a)) + t(x_a)``.  The scale is ``bound * tanh(raw)``
    with a trainable scalar ``bound``.
    """

    def __init__(self, mask: Sequence[int], hidden: int, n_hidden: int, rng: np.random.Generator,
                 scale_activation: str = "tanh", shift_activation: str = "relu",
                 bound_init: float = 2.0):
        mask = np.asarray(mask, dtype=int)
        if mask.min() == mask.max():
            raise ValueError("coupling mask needs at least one 0 and one 1")
        self.mask = mask
        self.cond = np.flatnonzero(mask == 1)
        self.trans = np.flatnonzero(mask == 0)
        self.restore = np.argsort(np.concatenate([self.cond, self.trans]))
        sizes = [len(self.cond)] + [hidden] * n_hidden + [len(self.trans)]
        self.scale_net = MLP(sizes, rng, activation=scale_activation, zero_last=True)
        self.shift_net = MLP(sizes, rng, activation=shift_activation, zero_last=True)
        self.bound = Tensor(np.asarray(bound_init), requires_grad=True)

    def _scale_shift(self, xa: Tensor) -> tuple[Tensor, Tensor]:
        s = ad.mul(self.bound, ad.tanh(self.scale_net(xa)))
        return s, self.shift_net(xa)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        xa = ad.take(x, self.cond)
        xb = ad.take(x, self.trans)
        s, t = self._scale_shift(xa)
        yb = ad.add(ad.mul(xb, ad.exp(s)), t)
        y = ad.take(ad.concat([xa, yb]), self.restore)
        return y, ad.sum(s, axis=1)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            ya = y[:, self.cond]
            s, t = self._scale_shift(Tensor(ya))
        xb = (y[:, self.trans] - t.data) * np.exp(-s.data)
        return np.concatenate([ya, xb], axis=1)[:, self.restore]


def made_masks(degrees_in: np.ndarray, hidden: int, n_hidden: int
               ) -> tuple[list[np.ndarray], np.ndarray]:
    """MADE connectivity masks.

    ``degrees_in[i]`` is the position (1..D) of input ``i`` in the
    autoregressive ordering.  Output ``j`` may only see inputs whose degree is
    strictly smaller than ``degrees_in[j]``.
    Returns the hidden-layer masks (input->h1, h1->h2, ...) and the output mask.
    """
    d = len(degrees_in)
    span = max(d - 1, 1)
    hidden_deg = np.arange(hidden) % span + 1
    masks = []
    prev = degrees_in
    for _ in range(n_hidden):
        masks.append((hidden_deg[None, :] >= prev[:, None]).astype(float))
        prev = hidden_deg
    out = (degrees_in[None, :] > prev[:, None]).astype(float)
    return masks, out


class MaskedAutoregressive(Module):
    """MAF layer: ``u_i = (x_i - mu_i(x_<i)) * exp(-a_i(x_<i))``.

    ``order`` lists input dimensions from first to last in the autoregressive
    ordering.
    """

    def __init__(self, dim: int, hidden: int, n_hidden: int, rng: np.random.Generator,
                 order: Sequence[int] | None = None, activation: str = "tanh"):
        order = np.arange(dim) if order is None else np.asarray(order, dtype=int)
        if sorted(order.tolist()) != list(range(dim)):
            raise ValueError(f"order must be a permutation of 0..{dim - 1}")
        self.dim = dim
        self.order = order
        self.degrees = np.empty(dim, dtype=int)
        self.degrees[order] = np.arange(1, dim + 1)
        self.activation = activation
        hidden_masks, out_mask = made_masks(self.degrees, hidden, n_hidden)
        sizes = [dim] + [hidden] * n_hidden
        self.hidden_layers = [
            MaskedLinear(sizes[i], sizes[i + 1], hidden_masks[i], rng) for i in range(n_hidden)
        ]
        self.mu_head = MaskedLinear(sizes[-1], dim, out_mask, rng, zero=True)
        self.logscale_head = MaskedLinear(sizes[-1], dim, out_mask, rng, zero=True)

    def conditioner(self, x: Tensor) -> tuple[Tensor, Tensor]:
        act = ACTIVATIONS[self.activation]
        h = x
        for layer in self.hidden_layers:
            h = act(layer(h))
        return self.mu_head(h), self.logscale_head(h)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        mu, a = self.conditioner(x)
        u = ad.mul(ad.sub(x, mu), ad.exp(ad.neg(a)))
        return u, ad.neg(ad.sum(a, axis=1))

    def inverse(self, u: np.ndarray) -> np.ndarray:
        x = np.zeros_like(u)
        with ad.no_grad():
            for i in self.order:
                mu, a = self.conditioner(Tensor(x))
                x[:, i] = u[:, i] * np.exp(a.data[:, i]) + mu.data[:, i]
        return x


class BatchNormBijection(Module):
    """Batch normalisation used as an invertible layer.

    Training mode normalises with batch statistics (and updates the running
    averages); eval mode uses the running averages, which makes the map a
    fixed per-dimension affine function.
    """

    _buffers = ("running_mean", "running_var")

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.log_gain = Tensor(np.zeros(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if self.training:
            m = ad.mean(x, axis=0)
            xc = ad.sub(x, m)
            var = ad.mean(ad.square(xc), axis=0)
            log_v = ad.log(ad.add(var, self.eps))
            mom = self.momentum
            self.running_mean = (1 - mom) * self.running_mean + mom * m.data
            self.running_var = (1 - mom) * self.running_var + mom * var.data
        else:
            xc = ad.sub(x, self.running_mean)
            log_v = Tensor(np.log(self.running_var + self.eps))
        inv_std = ad.exp(ad.mul(log_v, -0.5))
        y = ad.add_bias(ad.mul(ad.mul(xc, inv_std), ad.exp(self.log_gain)), self.bias)
        logdet = ad.sum(ad.sub(self.log_gain, ad.mul(log_v, 0.5)))
        return y, ad.mul(logdet, Tensor(np.ones(x.shape[0])))

    def inverse(self, y: np.ndarray) -> np.ndarray:
        std = np.sqrt(self.running_var + self.eps)
        return (y - self.bias.data) * np.exp(-self.log_gain.data) * std + self.running_mean


class FlowModel(Module):
    kind = "flow"

    def __init__(self, dim: int, layers: list, spec: dict | None = None):
        self.dim = dim
        self.layers = layers
        self.spec = dict(spec or {})

    def to_latent(self, x) -> tuple[Tensor, Tensor]:
        """Push ``x`` through every bijection; returns latent batch and summed log-det."""
        h = _tensor(x)
        if h.ndim != 2 or h.shape[1] != self.dim:
            raise ad.ShapeError("log_prob", h.shape, (None, self.dim))
        total = None
        for k, layer in enumerate(self.layers):
            try:
                h, ld = layer.forward(h)
            except NumericError as exc:
                raise FlowNumericError(k, exc) from exc
            total = ld if total is None else ad.add(total, ld)
        if total is None:
            total = Tensor(np.zeros(h.shape[0]))
        return h, total

    def log_prob(self, x) -> Tensor:
        z, logdet = self.to_latent(x)
        base = ad.sub(ad.mul(ad.sum(ad.square(z), axis=1), -0.5), 0.5 * self.dim * LOG_2PI)
        return ad.add(base, logdet)

    def log_prob_np(self, x: np.ndarray, batch: int = 4096) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        with ad.no_grad():
            parts = [self.log_prob(x[i:i + batch]).data for i in range(0, len(x), batch)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def inverse(self, z: np.ndarray) -> np.ndarray:
        x = np.asarray(z, dtype=np.float64)
        for layer in reversed(self.layers):
            x = layer.inverse(x)
        return x

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.inverse(rng.standard_normal((n, self.dim)))

    def score(self, x: np.ndarray) -> np.ndarray:
        """Gradient of ``log p(x)`` with respect to ``x`` (one row per point)."""
        xt = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
        (g,) = ad.grad(ad.sum(self.log_prob(xt)), [xt])
        return g


def build_realnvp(dim: int, n_layers: int = 5, hidden: int = 64, n_hidden: int = 2,
                  batchnorm: bool = False, scale_activation: str = "tanh",
                  shift_activation: str = "relu", bound_init: float = 2.0,
                  rng: np.random.Generator | None = None) -> FlowModel:
    if dim < 2:
        raise ValueError("coupling flows need at least 2 dimensions")
    rng = rng if rng is not None else np.random.default_rng(0)
    spec = dict(kind="realnvp", dim=dim, n_layers=n_layers, hidden=hidden, n_hidden=n_hidden,
                batchnorm=batchnorm, scale_activation=scale_activation,
                shift_activation=shift_activation, bound_init=bound_init)
    layers: list = []
    for k in range(n_layers):
        mask = (np.arange(dim) + k) % 2
        layers.append(AffineCoupling(mask, hidden, n_hidden, rng, scale_activation,
                                     shift_activation, bound_init))
        if batchnorm:
            layers.append(BatchNormBijection(dim))
    model = FlowModel(dim, layers, spec)
    model.kind = "realnvp"
    return model


def build_maf(dim: int, n_layers: int = 5, hidden: int = 512, n_hidden: int = 1,
              batchnorm: bool = True, activation: str = "tanh",
              rng: np.random.Generator | None = None) -> FlowModel:
    rng = rng if rng is not None else np.random.default_rng(0)
    spec = dict(kind="maf", dim=dim, n_layers=n_layers, hidden=hidden, n_hidden=n_hidden,
                batchnorm=batchnorm, activation=activation)
    layers: list = []
    order = np.arange(dim)
    for _ in range(n_layers):
        layers.append(MaskedAutoregressive(dim, hidden, n_hidden, rng, order=order,
                                           activation=activation))
        if batchnorm:
            layers.append(BatchNormBijection(dim))
        order = order[::-1].copy()
    model = FlowModel(dim, layers, spec)
    model.kind = "maf"
    return model


def build_flow(spec: dict, rng: np.random.Generator | None = None) -> FlowModel:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "realnvp":
        return build_realnvp(rng=rng, **spec)
    if kind == "maf":
        return build_maf(rng=rng, **spec)
    raise ValueError(f"unknown flow kind {kind!r}")
