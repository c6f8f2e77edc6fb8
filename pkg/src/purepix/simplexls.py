"""Least squares over the unit simplex (fully constrained least squares).

Solves min_c ||x - B c||_2^2 subject to c >= 0 and sum(c) = 1 with a
monotone accelerated projected-gradient scheme: gradient steps of length
1/||B||_2^2 on f(c) = 0.5 ||x - B c||^2, exact sort-based Euclidean
projection onto the simplex, Nesterov momentum with a descent guarantee
(the accelerated point is only kept when it does not increase f), and a
complementarity-based optimality certificate used as the stopping test.
The solver is convex-exact up to the certificate tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Array

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class SimplexLsSolution:
    """Solution of one simplex-constrained least-squares problem."""

    coefficients: Array
    residual_norm: float
    iterations: int
    converged: bool
    kkt: float
    objective_trace: tuple[float, ...] | None = None


@dataclass(frozen=True)
class BatchSimplexLsSolution:
    """Column-wise solutions for many targets against one dictionary."""

    coefficients: Array  # k x n_targets
    residual_norms: Array
    kkt: Array
    iterations: int
    converged: bool


def project_to_simplex(v: Array) -> Array:
    """Euclidean projection onto the unit simplex (columns if 2-D)."""
    single = v.ndim == 1
    V = v[:, None] if single else v
    k = V.shape[0]
    u = np.sort(V, axis=0)[::-1]
    css = (np.cumsum(u, axis=0) - 1.0) / np.arange(1, k + 1)[:, None]
    # last index where the sorted value still exceeds the running threshold
    rho = (u > css).cumsum(axis=0).argmax(axis=0)
    theta = np.take_along_axis(css, rho[None, :], axis=0)
    out = np.maximum(V - theta, 0.0)
    return out[:, 0] if single else out


def kkt_residual(coefficients, target, dictionary) -> float:
    """Simplex-constrained optimality violation of a feasible point: with
    g = B^T (B c - x) and mu = min_i g_i, returns max_i c_i (g_i - mu).
    Zero exactly when c is optimal."""
    c = np.asarray(coefficients, dtype=np.float64)
    B = np.asarray(dictionary, dtype=np.float64)
    x = np.asarray(target, dtype=np.float64)
    g = B.T @ (B @ c - x)
    return float(np.max(c * (g - g.min())))


def _prepare(dictionary, targets):
    B = np.asarray(dictionary, dtype=np.float64)
    if B.ndim != 2 or B.shape[1] < 1:
        raise ValueError("dictionary must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(B)):
        raise ValueError("dictionary contains non-finite entries")
    X = np.asarray(targets, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("target contains non-finite entries")
    if X.shape[0] != B.shape[0]:
        raise ValueError("target length must match dictionary row count")
    G = B.T @ B
    H = B.T @ X
    lipschitz = float(np.linalg.eigvalsh(G)[-1])  # ||B||_2^2
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    return B, X, G, H, step


_POLISH_EVERY = 25


def _polish(G, H, C, q_c, kkt, Y, t, columns) -> None:
    """Exact minimization on each column's current active face.

    Projected-gradient iterates identify the optimal face quickly but close
    the last digits slowly; solving the sum-to-one equality-constrained
    least squares on the detected support (a (s+1)x(s+1) linear system)
    lands on it at machine precision. A candidate is only accepted when it
    is feasible and does not increase the objective, so the monotonicity of
    the iterate sequence is preserved. Updates arrays in place.
    """
    k = G.shape[0]
    for col in columns:
        support = np.flatnonzero(C[:, col] > 0.0)
        cand_support = None
        while support.size:
            s = support.size
            system = np.zeros((s + 1, s + 1))
            system[:s, :s] = G[np.ix_(support, support)]
            system[:s, s] = 1.0
            system[s, :s] = 1.0
            rhs = np.append(H[support, col], 1.0)
            try:
                sol = np.linalg.solve(system, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(system, rhs, rcond=None)[0]
            cand_support = sol[:s]
            if not np.all(np.isfinite(cand_support)):
                cand_support = None
                break
            if cand_support.min() >= -1e-12:
                break
            support = support[cand_support > 0.0]  # drop inactive coordinates, retry
            cand_support = None
        if cand_support is None or not support.size:
            continue
        cand = np.zeros(k)
        cand[support] = np.maximum(cand_support, 0.0)
        total = cand.sum()
        if not (0.5 < total < 2.0):
            continue
        cand /= total
        q_cand = 0.5 * cand @ (G @ cand) - H[:, col] @ cand
        if q_cand <= q_c[col] + 1e-12 * (1.0 + abs(q_c[col])):  # descent up to fp noise
            g = G @ cand - H[:, col]
            C[:, col] = cand
            q_c[col] = q_cand
            kkt[col] = float(np.max(cand * (g - g.min())))
            Y[:, col] = cand
            t[col] = 1.0


def _iterate(G, H, step, tol, max_iter, record=False):
    """Monotone accelerated projected gradient on all target columns at once.

    Columns are frozen as soon as their certificate clears ``tol`` (the
    certificate is not monotone along the iteration, so waiting for all
    columns to clear it simultaneously can stall). Momentum restarts per
    column whenever the accelerated candidate would increase the objective,
    and the active face is polished exactly every few sweeps. Returns
    (C, kkt, iterations, converged, trace); tracked objectives are
    q(c) = 0.5 c^T G c - h^T c, i.e. 0.5 ||x - Bc||^2 minus a constant.
    """
    k, n = H.shape

    def q_of(M, Hs):
        return 0.5 * np.einsum("ij,ij->j", M, G @ M) - np.einsum("ij,ij->j", Hs, M)

    def kkt_of(M, Hs):
        g = G @ M - Hs
        return np.max(M * (g - g.min(axis=0)), axis=0)

    C = np.full((k, n), 1.0 / k)
    q_c = q_of(C, H)
    kkt = kkt_of(C, H)
    trace = [q_c.copy()] if record else None
    live = kkt > tol
    Y = C.copy()
    t = np.ones(n)

    iterations = 0
    while iterations < max_iter and live.any():
        iterations += 1
        idx = np.flatnonzero(live)
        Hl = H[:, idx]
        Yl = Y[:, idx]
        Z = project_to_simplex(Yl - step * (G @ Yl - Hl))
        q_z = q_of(Z, Hl)
        keep = q_z <= q_c[idx]  # descent guarantee: never accept an ascent
        C_old = C[:, idx]
        C_new = np.where(keep, Z, C_old)
        t_old = t[idx]
        t_new = np.where(keep, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_old * t_old)), 1.0)
        Y_new = np.where(
            keep,
            C_new + (t_old / t_new) * (Z - C_new) + ((t_old - 1.0) / t_new) * (C_new - C_old),
            C_new,  # restart momentum after a rejected step
        )
        C[:, idx] = C_new
        Y[:, idx] = Y_new
        t[idx] = t_new
        q_c[idx] = np.where(keep, q_z, q_c[idx])
        kkt[idx] = kkt_of(C_new, Hl)
        if iterations == 1 or iterations % _POLISH_EVERY == 0:
            _polish(G, H, C, q_c, kkt, Y, t, idx[kkt[idx] > tol])
        if record:
            trace.append(q_c.copy())
        live[idx[kkt[idx] <= tol]] = False
    if live.any():  # final attempt for stragglers at the iteration cap
        _polish(G, H, C, q_c, kkt, Y, t, np.flatnonzero(live))
        live &= kkt > tol
    return C, kkt, iterations, not live.any(), trace


def solve_simplex_ls(
    target,
    dictionary,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    record_objectives: bool = False,
) -> SimplexLsSolution:
    """Solve one FCLS problem to within ``tol`` of optimality (certified by
    :func:`kkt_residual`); if ``max_iter`` is hit the best iterate so far is
    returned with ``converged=False``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    B, x, G, H, step = _prepare(dictionary, np.asarray(target, dtype=np.float64).reshape(-1, 1))
    C, kkt, iterations, converged, trace = _iterate(G, H, step, tol, max_iter, record=record_objectives)
    c = C[:, 0]
    residual = float(np.linalg.norm(x[:, 0] - B @ c))
    objective_trace = None
    if record_objectives:
        offset = 0.5 * float(x[:, 0] @ x[:, 0])
        objective_trace = tuple(2.0 * (float(v[0]) + offset) for v in trace)  # ||x - Bc||^2
    return SimplexLsSolution(
        coefficients=c,
        residual_norm=residual,
        iterations=iterations,
        converged=converged,
        kkt=float(kkt[0]),
        objective_trace=objective_trace,
    )


def solve_simplex_ls_batch(
    targets,
    dictionary,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BatchSimplexLsSolution:
    """Solve FCLS for every target column against a shared dictionary."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    B, X, G, H, step = _prepare(dictionary, targets)
    C, kkt, iterations, converged, _ = _iterate(G, H, step, tol, max_iter)
    residuals = np.linalg.norm(X - B @ C, axis=0)
    return BatchSimplexLsSolution(
        coefficients=C,
        residual_norms=residuals,
        kkt=kkt,
        iterations=iterations,
        converged=converged,
    )
