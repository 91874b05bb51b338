"""Data corruption operators: Gaussian noise injection and DCT-domain blurring."""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

__all__ = [
    "gaussian_mollify",
    "dct2_forward",
    "dct2_inverse",
    "heat_frequencies",
    "attenuation",
    "blur_mollify",
    "UnsupportedShapeError",
]


class UnsupportedShapeError(ValueError):
    pass


def gaussian_mollify(x: np.ndarray, alpha: float, sigma: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Return ``alpha * x + sigma * eps`` with fresh standard-normal ``eps``.

    ``sigma == 0`` returns ``x`` itself untouched (and draws nothing from ``rng``).
    """
    if alpha < 0 or sigma < 0:
        raise ValueError(f"alpha and sigma must be non-negative, got {alpha}, {sigma}")
    if abs(alpha * alpha + sigma * sigma - 1.0) > 1e-12:
        raise ValueError(f"not variance preserving: alpha^2 + sigma^2 = {alpha**2 + sigma**2}")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0.0:
        return x
    return alpha * x + sigma * rng.standard_normal(x.shape)


def _grid(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim not in (2, 3) or g.shape[-1] != g.shape[-2]:
        raise UnsupportedShapeError(f"expected a square K x K grid (optionally channels-first), got {g.shape}")
    return g


def dct2_forward(g: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT over the last two axes."""
    return dctn(_grid(g), type=2, axes=(-2, -1), norm="ortho")


def dct2_inverse(coeffs: np.ndarray) -> np.ndarray:
    return idctn(_grid(coeffs), type=2, axes=(-2, -1), norm="ortho")


def heat_frequencies(k: int) -> np.ndarray:
    """Squared frequency ``f_i^2 + f_j^2`` of each DCT coefficient on a K x K grid."""
    f = np.pi * np.linspace(0, k - 1, k) / k
    return f[:, None] ** 2 + f[None, :] ** 2


def attenuation(k: int, t: float) -> np.ndarray:
    """Per-coefficient damping factors ``exp(-(f_i^2 + f_j^2) t)``; entry (0, 0) is exactly 1."""
    return np.exp(-heat_frequencies(k) * t)


def blur_mollify(g: np.ndarray, t: float) -> np.ndarray:
    """Solve the heat equation for time ``t`` starting from image ``g``.

    Each DCT coefficient is damped by ``exp(-(f_i^2 + f_j^2) t)``; the DC term
    has zero frequency, so the mean pixel value is preserved.  Channels-first
    ``(C, K, K)`` input blurs each channel independently.
    """
    if t < 0:
        raise ValueError(f"blur time must be non-negative, got {t}")
    g = _grid(g)
    if t == 0:
        return g.copy()
    return dct2_inverse(dct2_forward(g) * attenuation(g.shape[-1], t))
