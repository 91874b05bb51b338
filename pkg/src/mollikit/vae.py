"""Small Gaussian VAEs: ELBO, beta-weighted ELBO and the importance-weighted bound."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError, Tensor
from .nn import MLP, Module

__all__ = ["VaeModel", "build_vae", "gaussian_log_density", "kl_to_standard_normal",
           "elbo", "elbo_terms", "iwae_bound"]

LOG_2PI = math.log(2.0 * math.pi)


class VaeModel(Module):
    """Diagonal-Gaussian encoder ``q(z|x)`` and decoder ``p(x|z)`` with a standard-normal prior.

    Both networks emit a mean and a log-variance; log-variances are clamped
    to ``[-logvar_bound, logvar_bound]``.
    """

    kind = "vae"

    def __init__(self, dim: int, latent: int = 2, hidden: int = 64, n_hidden: int = 2,
                 activation: str = "relu", logvar_bound: float = 7.0, sample_mean: bool = True,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.latent = latent
        self.logvar_bound = logvar_bound
        self.sample_mean = sample_mean
        self.spec = dict(kind="vae", dim=dim, latent=latent, hidden=hidden, n_hidden=n_hidden,
                         activation=activation, logvar_bound=logvar_bound,
                         sample_mean=sample_mean)
        self.encoder = MLP([dim] + [hidden] * n_hidden + [2 * latent], rng, activation)
        self.decoder = MLP([latent] + [hidden] * n_hidden + [2 * dim], rng, activation)
        self._p = np.arange(latent)
        self._d = np.arange(dim)

    def _split(self, h: Tensor, n: int) -> tuple[Tensor, Tensor]:
        b = self.logvar_bound
        return ad.take(h, self._p if n == self.latent else self._d), \
            ad.clip(ad.take(h, np.arange(n, 2 * n)), -b, b)

    def encode(self, x) -> tuple[Tensor, Tensor]:
        return self._split(self.encoder(_tensor(x)), self.latent)

    def decode(self, z) -> tuple[Tensor, Tensor]:
        return self._split(self.decoder(_tensor(z)), self.dim)

    def sample(self, n: int, rng: np.random.Generator, mean: bool | None = None) -> np.ndarray:
        """Decode prior draws; returns decoder means unless ``mean`` is False."""
        mean = self.sample_mean if mean is None else mean
        if n == 0:
            return np.zeros((0, self.dim))
        z = rng.standard_normal((n, self.latent))
        with ad.no_grad():
            mu, logvar = self.decode(z)
        if mean:
            return mu.data
        return mu.data + np.exp(0.5 * logvar.data) * rng.standard_normal(mu.shape)

    def log_prob_bound(self, x: np.ndarray, rng: np.random.Generator, k: int = 100,
                       batch: int = 1024) -> np.ndarray:
        """Per-example importance-weighted lower bound on ``log p(x)``."""
        x = np.asarray(x, dtype=np.float64)
        out = []
        with ad.no_grad():
            for i in range(0, len(x), batch):
                out.append(_iwae_per_example(self, x[i:i + batch], k, rng, None).data)
        return np.concatenate(out) if out else np.zeros(0)


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def build_vae(spec: dict, rng: np.random.Generator | None = None) -> VaeModel:
    spec = dict(spec)
    spec.pop("kind", None)
    return VaeModel(rng=rng, **spec)


def gaussian_log_density(x, mu: Tensor, logvar: Tensor) -> Tensor:
    """Row-wise ``log N(x; mu, diag(exp(logvar)))``."""
    diff2 = ad.square(ad.sub(x, mu))
    per = ad.add(ad.add(logvar, ad.mul(diff2, ad.exp(ad.neg(logvar)))), LOG_2PI)
    return ad.mul(ad.sum(per, axis=1), -0.5)


def kl_to_standard_normal(mu: Tensor, logvar: Tensor) -> Tensor:
    """Closed-form ``KL(N(mu, exp(logvar)) || N(0, I))`` per row."""
    per = ad.sub(ad.sub(ad.add(ad.square(mu), ad.exp(logvar)), 1.0), logvar)
    return ad.mul(ad.sum(per, axis=1), 0.5)


def _reparam(mu: Tensor, logvar: Tensor, eps: np.ndarray) -> Tensor:
    return ad.add(mu, ad.mul(ad.exp(ad.mul(logvar, 0.5)), eps))


def elbo_terms(model: VaeModel, x, eps: np.ndarray, kl: str = "analytic"
               ) -> tuple[Tensor, Tensor]:
    """Per-example reconstruction log-likelihood and KL term for noise ``eps``.

    ``kl="analytic"`` uses the closed form; ``kl="sample"`` uses the
    single-draw estimate ``log q(z|x) - log p(z)`` at the same ``z``.
    """
    x = _tensor(x)
    mu_z, logvar_z = model.encode(x)
    z = _reparam(mu_z, logvar_z, eps)
    mu_x, logvar_x = model.decode(z)
    recon = gaussian_log_density(x, mu_x, logvar_x)
    if kl == "analytic":
        kl_term = kl_to_standard_normal(mu_z, logvar_z)
    elif kl == "sample":
        zeros = np.zeros(z.shape)
        kl_term = ad.sub(gaussian_log_density(z, mu_z, logvar_z),
                         gaussian_log_density(z, zeros, zeros))
    else:
        raise ValueError(f"kl must be 'analytic' or 'sample', got {kl!r}")
    return recon, kl_term


def elbo(model: VaeModel, x, rng: np.random.Generator | None = None, beta: float = 1.0,
         kl: str = "analytic", eps: np.ndarray | None = None) -> Tensor:
    """Batch-mean of ``E_q[log p(x|z)] - beta * KL(q(z|x) || p(z))`` with one draw per datum."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    n = _tensor(x).shape[0]
    if eps is None:
        eps = rng.standard_normal((1, n, model.latent))[0]
    recon, kl_term = elbo_terms(model, x, eps, kl)
    out = ad.mean(ad.sub(recon, ad.mul(kl_term, beta)))
    if not np.isfinite(out.data):
        raise NumericError("elbo is not finite")
    return out


def _iwae_per_example(model: VaeModel, x, k: int, rng, eps) -> Tensor:
    if k < 1:
        raise ValueError(f"number of importance samples must be >= 1, got {k}")
    x = _tensor(x)
    n = x.shape[0]
    if eps is None:
        eps = rng.standard_normal((k, n, model.latent))
    mu_z, logvar_z = model.encode(x)
    zeros = np.zeros((n, model.latent))
    cols = []
    for j in range(k):
        z = _reparam(mu_z, logvar_z, eps[j])
        mu_x, logvar_x = model.decode(z)
        recon = gaussian_log_density(x, mu_x, logvar_x)
        kl_j = ad.sub(gaussian_log_density(z, mu_z, logvar_z),
                      gaussian_log_density(z, zeros, zeros))
        cols.append(ad.reshape(ad.sub(recon, kl_j), (n, 1)))
    return ad.sub(ad.logsumexp(ad.concat(cols), axis=1), math.log(k))


def iwae_bound(model: VaeModel, x, k: int = 5, rng: np.random.Generator | None = None,
               eps: np.ndarray | None = None) -> Tensor:
    """Batch-mean of ``log mean_k w_k`` with ``w_k = p(x, z_k) / q(z_k | x)``.

    With ``k == 1`` this is bitwise equal to ``elbo(..., beta=1, kl="sample")``
    computed from the same draws.
    """
    out = ad.mean(_iwae_per_example(model, x, k, rng, eps))
    if not np.isfinite(out.data):
        raise NumericError("iwae bound is not finite")
    return out
