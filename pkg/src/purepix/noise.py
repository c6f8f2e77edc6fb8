"""Noise-bound estimation from data.

Each spectral band is regressed onto all other bands (multiple linear
regression with a small relative ridge on the normal equations); the
regression residuals are taken as gross noise estimates, and the bound is
the maximum (or a quantile of the) estimated noise column norm.
"""

from __future__ import annotations

import numpy as np

from .model import Array, pixel_data

RIDGE_REL = 1e-12


def estimate_noise(pixels, quantile: float = 1.0) -> tuple[Array, float]:
    """Return (estimated noise matrix, epsilon_hat).

    Requires at least two bands and at least as many pixels as bands so the
    per-band regressions are well posed. ``quantile`` < 1 trades the strict
    maximum column norm for an outlier-resistant level.
    """
    X = pixel_data(pixels)
    m, l = X.shape
    if m < 2:
        raise ValueError("noise estimation needs at least two bands")
    if l < m:
        raise ValueError(f"noise estimation needs n_pixels >= n_bands, got {l} < {m}")
    if not (0.0 < quantile <= 1.0):
        raise ValueError("quantile must lie in (0, 1]")

    gram = X @ X.T
    noise = np.empty_like(X)
    mask = np.ones(m, dtype=bool)
    for i in range(m):
        mask[:] = True
        mask[i] = False
        normal = gram[np.ix_(mask, mask)].copy()
        ridge = RIDGE_REL * float(np.trace(normal)) / (m - 1)
        normal[np.diag_indices_from(normal)] += ridge
        beta = np.linalg.solve(normal, gram[mask, i])
        noise[i] = X[i] - beta @ X[mask]

    norms = np.linalg.norm(noise, axis=0)
    if quantile >= 1.0:
        epsilon = float(norms.max())
    else:
        epsilon = float(np.quantile(norms, quantile))
    return noise, epsilon


def delta_from_epsilon(epsilon_hat: float, multiplier: float = 2.0) -> float:
    """Feasibility tolerance from a noise bound; the default doubles it."""
    if epsilon_hat < 0:
        raise ValueError("epsilon_hat must be non-negative")
    if multiplier < 0:
        raise ValueError("multiplier must be non-negative")
    return multiplier * epsilon_hat
