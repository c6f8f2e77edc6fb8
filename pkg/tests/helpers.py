"""Shared test fixtures: guarantee-regime instance construction and
brute-force oracles that stay independent of the code paths they check."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from purepix.model import (
    AbundanceMatrix,
    EndmemberMatrix,
    IndexSet,
    MixingInstance,
    PixelMatrix,
    random_spectra,
)
from purepix.oracle import diagnostics_from_parts


def bounded_noise_instance(
    n_endmembers: int,
    n_pixels: int,
    n_bands: int,
    seed: int,
    level: str = "exhaustive",
    eps_scale: float = 0.5,
) -> MixingInstance:
    """Pure-pixel instance with worst-case-bounded noise below the chosen
    recovery threshold ("exhaustive" picks the tighter combinatorial-search
    bound, "greedy" the sqrt(N)-eta-scaled pursuit bound): noise column
    norms are drawn in [0.3, 0.95] of the target (smaller at the pure
    pixels so the feasibility margin at the full selection is comfortable),
    giving a uniformly norm-bounded noise model."""
    rng = np.random.default_rng(seed)
    A = random_spectra(n_bands, n_endmembers, rng)
    draws = rng.exponential(size=(n_endmembers, n_pixels))
    S = draws / draws.sum(axis=0)
    positions = rng.choice(n_pixels, size=n_endmembers, replace=False)
    for k in range(n_endmembers):
        col = np.zeros(n_endmembers)
        col[k] = 1.0
        S[:, positions[k]] = col

    diag = diagnostics_from_parts(A, S, 0.0)
    eps_max = diag.exhaustive_eps_bound if level == "exhaustive" else diag.greedy_eps_bound
    eps_target = eps_scale * eps_max

    noise = rng.standard_normal((n_bands, n_pixels))
    scales = rng.uniform(0.3, 0.95, n_pixels) * eps_target
    scales[positions] = rng.uniform(0.05, 0.3, n_endmembers) * eps_target
    noise = noise / np.linalg.norm(noise, axis=0) * scales

    return MixingInstance(
        pixels=PixelMatrix(A @ S + noise),
        endmembers=EndmemberMatrix(A),
        abundances=AbundanceMatrix(S),
        noise=noise,
        pure_pixel_set=IndexSet(tuple(int(p) for p in positions)),
        noise_bound_true=float(np.linalg.norm(noise, axis=0).max()),
        snr_db=math.inf,
    )


@lru_cache(maxsize=8)
def simplex_grid(k: int, step: float) -> np.ndarray:
    """All points of the unit simplex on a regular grid, one per column."""
    ticks = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    if k == 1:
        return np.array([[1.0]])
    if k == 2:
        return np.vstack([ticks, 1.0 - ticks])
    if k == 3:
        cols = []
        for a in ticks:
            b = ticks[ticks <= 1.0 - a + step / 2]
            c = 1.0 - a - b
            keep = c >= -step / 2
            cols.append(np.vstack([np.full(keep.sum(), a), b[keep], np.clip(c[keep], 0.0, 1.0)]))
        return np.hstack(cols)
    raise ValueError("grid oracle supports k <= 3")


def grid_search_objective(target: np.ndarray, dictionary: np.ndarray, step: float) -> float:
    """Brute-force minimum of ||x - Bc||^2 over the gridded simplex."""
    grid = simplex_grid(dictionary.shape[1], step)
    residuals = target[:, None] - dictionary @ grid
    return float(np.min(np.einsum("ij,ij->j", residuals, residuals)))
