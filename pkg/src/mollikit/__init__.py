"""Density estimation with annealed Gaussian data mollification.

A small numpy-only toolkit: tape-based reverse-mode autodiff, RealNVP and
MAF normalizing flows, a Gaussian VAE, noise schedules, Gaussian and
heat-equation mollification, MMD and log-likelihood evaluation, and a
training loop that anneals the mollification level to zero.
"""

__version__ = "0.1.0"
