"""Ground-truth machinery for tiny instances and theory diagnostics.

Contains the exhaustive solver for the row-sparsity self-dictionary
problem (minimum number of pixel atoms whose convex combinations cover the
whole dataset within a tolerance), the pure/non-pure abundance separation
measure, and the noise-bound/threshold quantities used by the recovery
property tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import AbundanceMatrix, Array, IndexSet, MixingInstance, pixel_data
from .simplexls import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_simplex_ls_batch

FEASIBILITY_SLACK = 1e-8
BRUTE_FORCE_MAX_PIXELS = 16
MATCHING_MAX_ENDMEMBERS = 8


class DegenerateAbundancesError(ValueError):
    """Every pixel is pure for some endmember; the separation measure is undefined."""


@dataclass(frozen=True)
class TheoryDiagnostics:
    """Instance quantities entering the recovery guarantees.

    exhaustive_eps_bound = sigma_min * min(1, d(S)) / 8 is the noise level
    under which the exhaustive minimum-support search provably recovers;
    greedy_eps_bound divides by 4 sqrt(N) eta instead and gates the greedy
    pursuit with either stopping rule. eta_proxy is
    max_i ||a_i||^2 / sigma_min^2 clamped below at 1; it stands in for a
    constant that is only known up to scale, so every consumer treats the
    derived thresholds as property-test inputs rather than exact constants.
    The admissible tolerance windows are [2 eps, sigma_min/2 - 2 eps) and
    [2 eps, sigma_min - 2 eps); separation_radius = 2 (delta + 2 eps) /
    sigma_min bounds how far any feasible support member can sit from a
    vertex (distinctness of the matched members needs it below 1).
    """

    sigma_min: float
    d_s: float
    eta_proxy: float
    exhaustive_eps_bound: float
    greedy_eps_bound: float
    exhaustive_delta_window: tuple[float, float]
    greedy_delta_window: tuple[float, float]
    separation_radius: float | None = None


def compute_d_s(abundances) -> float:
    """Minimum l1 distance from any unit vector to any non-pure abundance
    column: min_k min_{n: s[n] != e_k} ||e_k - s[n]||_1. Also checked
    against the simplex identity 2 (1 - s_k[n])."""
    S = abundances.data if isinstance(abundances, AbundanceMatrix) else np.asarray(abundances, dtype=np.float64)
    n_end, n_pix = S.shape
    best = math.inf
    for k in range(n_end):
        e_k = np.zeros(n_end)
        e_k[k] = 1.0
        non_pure = ~np.all(S == e_k[:, None], axis=0)
        if not np.any(non_pure):
            raise DegenerateAbundancesError(f"every pixel is pure for endmember {k}")
        l1 = np.abs(e_k[:, None] - S[:, non_pure]).sum(axis=0)
        identity = 2.0 * (1.0 - S[k, non_pure])
        if not np.allclose(l1, identity, rtol=0.0, atol=1e-9):
            raise AssertionError("l1 distance disagrees with the 2(1 - s_k) identity")
        best = min(best, float(l1.min()))
    return best


def _support_feasible(X: Array, support: tuple[int, ...], delta: float, tol: float, max_iter: int) -> bool:
    sub = X[:, list(support)]
    # Unconstrained projection residual lower-bounds the simplex-constrained
    # one, so it prunes infeasible supports without any FCLS solve.
    basis, _ = np.linalg.qr(sub)
    residual = X - basis @ (basis.T @ X)
    lower = np.linalg.norm(residual, axis=0)
    threshold = delta + FEASIBILITY_SLACK
    if np.any(lower > threshold):
        return False
    batch = solve_simplex_ls_batch(X, sub, tol=tol, max_iter=max_iter)
    return bool(np.all(batch.residual_norms <= threshold))


def solve_sdmmv_bruteforce(
    pixels,
    delta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> IndexSet:
    """Exhaustively find a smallest pixel subset whose convex combinations
    reproduce every pixel within delta; among optimal supports the
    lexicographically smallest is returned. Only intended for tiny scenes."""
    X = pixel_data(pixels)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    L = X.shape[1]
    if L > BRUTE_FORCE_MAX_PIXELS:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_PIXELS} pixels, got {L}")
    for k in range(1, L + 1):
        for support in itertools.combinations(range(L), k):
            if _support_feasible(X, support, delta, tol, max_iter):
                return IndexSet(support)
    raise AssertionError("the full support must always be feasible")  # unreachable for delta >= 0


def diagnostics_from_parts(endmembers, abundances, noise_bound: float, delta: float | None = None) -> TheoryDiagnostics:
    """Theory quantities from the raw ground-truth pieces; when ``delta`` is
    given the model-order separation radius 2 (delta + 2 eps)/sigma_min is
    filled in as well."""
    A = np.asarray(endmembers, dtype=np.float64)
    sigma_min = float(np.linalg.svd(A, compute_uv=False)[-1])
    d_s = compute_d_s(abundances)
    eta = max(1.0, float((np.linalg.norm(A, axis=0) ** 2).max()) / sigma_min**2)
    eps = float(noise_bound)
    n = A.shape[1]
    radius = None if delta is None else 2.0 * (delta + 2.0 * eps) / sigma_min
    return TheoryDiagnostics(
        sigma_min=sigma_min,
        d_s=d_s,
        eta_proxy=eta,
        exhaustive_eps_bound=sigma_min * min(1.0, d_s) / 8.0,
        greedy_eps_bound=sigma_min * min(1.0, d_s) / (4.0 * math.sqrt(n) * eta),
        exhaustive_delta_window=(2.0 * eps, sigma_min / 2.0 - 2.0 * eps),
        greedy_delta_window=(2.0 * eps, sigma_min - 2.0 * eps),
        separation_radius=radius,
    )


def diagnostics(instance: MixingInstance, delta: float | None = None) -> TheoryDiagnostics:
    """Theory quantities for a ground-truth instance."""
    return diagnostics_from_parts(
        instance.endmembers.data,
        instance.abundances,
        instance.noise_bound_true,
        delta,
    )


def recovery_error(estimated, instance: MixingInstance) -> tuple[Array, tuple[int, ...]]:
    """Match estimated pixel columns to true endmember columns minimizing
    the total l2 error (exhaustive assignment).

    With at most as many estimates as endmembers, returns per-estimate
    errors and the matched endmember index for each estimate; with more
    estimates than endmembers, returns per-endmember errors and the matched
    estimate position for each endmember.
    """
    idx = list(estimated)
    if not idx:
        raise ValueError("estimated index set is empty")
    X = instance.pixels.data
    A = instance.endmembers.data
    n = A.shape[1]
    if max(n, len(idx)) > MATCHING_MAX_ENDMEMBERS:
        raise ValueError(f"exhaustive matching limited to {MATCHING_MAX_ENDMEMBERS} columns per side")
    cost = np.empty((len(idx), n))
    for row, j in enumerate(idx):
        cost[row] = np.linalg.norm(A - X[:, j][:, None], axis=0)

    estimates_lead = len(idx) <= n
    domain, width = (n, len(idx)) if estimates_lead else (len(idx), n)
    best_total = math.inf
    best_perm: tuple[int, ...] | None = None
    for perm in itertools.permutations(range(domain), width):
        if estimates_lead:
            total = sum(cost[row, perm[row]] for row in range(width))
        else:
            total = sum(cost[perm[col], col] for col in range(width))
        if total < best_total:
            best_total = total
            best_perm = perm
    if estimates_lead:
        errors = np.array([cost[row, best_perm[row]] for row in range(width)])
    else:
        errors = np.array([cost[best_perm[col], col] for col in range(width)])
    return errors, best_perm
