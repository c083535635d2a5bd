"""Random samplers used by the imputers and the null-distribution harness.

All samplers take either an ``RngStream`` or a numpy ``Generator``; given the
same stream they reproduce the same draws bit for bit.  The Wishart sampler
uses the Bartlett construction so a draw costs one Cholesky factorization
plus p chi-square and p(p-1)/2 normal variates.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .rng import as_generator


def standard_normal(rng, size=None):
    return as_generator(rng).standard_normal(size)


def gamma(shape, rng, size=None, scale=1.0):
    """Gamma draws (numpy's squeeze/rejection scheme; reproducible)."""
    if np.any(np.asarray(shape) <= 0):
        raise ValueError(f"gamma shape must be positive, got {shape}")
    return as_generator(rng).gamma(shape, scale=scale, size=size)


def dirichlet(alpha, rng, size=None):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("dirichlet concentration parameters must be positive")
    return as_generator(rng).dirichlet(alpha, size=size)


def multivariate_normal(mean, cov, rng, size=None):
    """MVN draws through the Cholesky factor of ``cov``."""
    mean = np.asarray(mean, dtype=float)
    root = linalg.cholesky(cov)
    gen = as_generator(rng)
    if size is None:
        z = gen.standard_normal(mean.shape[0])
        return mean + root @ z
    z = gen.standard_normal((*np.atleast_1d(size), mean.shape[0]))
    return mean + z @ root.T


def wishart(df, scale, rng, size=None):
    """Wishart draws via the Bartlett decomposition.

    ``df`` must exceed dim - 1; ``scale`` must be SPD.  Returns one (p, p)
    matrix, or a (size, p, p) stack when ``size`` is given.
    """
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[0]
    if not df > p - 1:
        raise ValueError(f"wishart df must exceed dim - 1 = {p - 1}, got {df}")
    root = linalg.cholesky(scale)
    gen = as_generator(rng)

    n = 1 if size is None else int(size)
    bartlett = np.zeros((n, p, p))
    # Diagonal: sqrt of chi-square with decreasing df; below-diagonal: N(0,1).
    for j in range(p):
        bartlett[:, j, j] = np.sqrt(gen.chisquare(df - j, size=n))
    rows, cols = np.tril_indices(p, k=-1)
    if rows.size:
        bartlett[:, rows, cols] = gen.standard_normal((n, rows.size))

    factor = root @ bartlett  # (n, p, p) batched
    draws = factor @ np.swapaxes(factor, -1, -2)
    return draws[0] if size is None else draws
