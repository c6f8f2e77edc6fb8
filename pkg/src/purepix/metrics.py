"""Experiment metrics: detection, model-order statistics, spectral angles."""

from __future__ import annotations

import math

import numpy as np

from .model import AbundanceMatrix, MixingInstance

PURE_TOL = 1e-12


def endmember_identity(abundances, index: int) -> int | None:
    """Endmember whose unit vector equals the abundance column, or None."""
    S = abundances.data if isinstance(abundances, AbundanceMatrix) else np.asarray(abundances, dtype=np.float64)
    col = S[:, int(index)]
    k = int(np.argmax(col))
    e_k = np.zeros_like(col)
    e_k[k] = 1.0
    if np.abs(col - e_k).max() <= PURE_TOL:
        return k
    return None


def detection(estimated, reference, instance: MixingInstance) -> bool:
    """Whether the estimate identifies the reference set.

    When the reference consists of pure pixels, the comparison is by
    endmember identity (a different repeat of the same endmember's pure
    pixel still counts), requiring the estimate to cover every endmember
    exactly once. When the reference is a nearest-pure surrogate (no pure
    pixels exist), plain set equality of indices is used.
    """
    S = instance.abundances.data
    est = list(estimated)
    ref = list(reference)
    ref_ids = [endmember_identity(S, n) for n in ref]
    if all(k is not None for k in ref_ids):
        n_end = S.shape[0]
        if len(est) != n_end:
            return False
        est_ids = [endmember_identity(S, n) for n in est]
        if any(k is None for k in est_ids):
            return False
        return sorted(est_ids) == list(range(n_end))
    return set(est) == set(ref)


def detection_probability(trials) -> float:
    """Fraction of detected trials."""
    flags = list(trials)
    if not flags:
        raise ValueError("no trials")
    return sum(bool(f) for f in flags) / len(flags)


def model_order_stats(estimates) -> tuple[float, float]:
    """Mean and sample standard deviation (n-1) of model-order estimates;
    a single estimate has deviation 0 by convention."""
    values = np.asarray(list(estimates), dtype=np.float64)
    if values.size == 0:
        raise ValueError("no estimates")
    mean = float(values.mean())
    std = 0.0 if values.size == 1 else float(values.std(ddof=1))
    return mean, std


def format_model_order(mean: float, std: float) -> str:
    """Compact "mean±std" rendering, three significant digits."""

    def fmt(v: float) -> str:
        if v == int(v):
            return str(int(v))
        return f"{v:.3g}"

    return f"{fmt(mean)}±{fmt(std)}"


def mrsa(estimate, reference) -> float:
    """Mean-removed spectral angle between two spectra, in degrees.

    Invariant to positive scaling and constant offsets of either argument;
    undefined (raises) for constant vectors.
    """
    a = np.asarray(estimate, dtype=np.float64).reshape(-1)
    b = np.asarray(reference, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("spectra must have the same length")
    ac = a - a.mean()
    bc = b - b.mean()
    na = np.linalg.norm(ac)
    nb = np.linalg.norm(bc)
    if na == 0.0 or nb == 0.0:
        raise ValueError("mean-removed spectral angle is undefined for constant spectra")
    cosine = float(np.clip(ac @ bc / (na * nb), -1.0, 1.0))
    return math.degrees(math.acos(cosine))
