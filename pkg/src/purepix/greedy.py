"""Greedy self-dictionary pursuit: simultaneous OMP where the measured
pixels are their own dictionary.

Each iteration scores every pixel against the current orthogonal-complement
residual, selects the argmax, and extends an orthonormal basis of the
selected columns (incremental Gram-Schmidt, one new vector per iteration).
For q = inf the scan reduces to picking the largest projected column norm,
which is the successive-projection search; for finite q the full
correlation matrix is scored. Termination is configurable: noiseless
residual floor, two feasibility-based rules for noisy data with unknown
model order, or a fixed iteration count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Array, IndexSet, pixel_data
from .simplexls import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_simplex_ls, solve_simplex_ls_batch

RANK_GUARD = 1e-10
RULE_SLACK = 1e-8

STOPPING_MODES = ("residual", "rule1", "rule2", "fixed")


class RankDeficiencyError(ArithmeticError):
    """Selected pixel columns are numerically rank deficient."""


@dataclass(frozen=True)
class SompConfig:
    """Settings for one pursuit run.

    delta shares units with pixel column norms; residual_floor is relative
    to the Frobenius norm of the data.
    """

    q: float = math.inf
    stopping: str = "residual"
    delta: float = 0.0
    n_iterations: int | None = None
    max_endmembers: int | None = None
    residual_floor: float = 1e-9
    solver_tol: float = DEFAULT_TOL
    solver_max_iter: int = DEFAULT_MAX_ITER
    rule_slack: float = RULE_SLACK

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError(f"q must lie in (1, inf], got {self.q}")
        if self.stopping not in STOPPING_MODES:
            raise ValueError(f"stopping must be one of {STOPPING_MODES}, got {self.stopping!r}")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.stopping == "fixed" and (self.n_iterations is None or self.n_iterations < 1):
            raise ValueError("fixed stopping requires n_iterations >= 1")


@dataclass(frozen=True)
class SelectionStep:
    """One committed selection: the score that won, the Frobenius norm of
    the residual after the update, and the stopping statistic evaluated at
    this iteration (rule dependent; None when not applicable)."""

    index: int
    score: float
    residual_frobenius: float
    stopping_statistic: float | None


@dataclass(frozen=True)
class SelectionTrace:
    steps: tuple[SelectionStep, ...]
    stopped_by: str
    stop_statistic: float | None = None


def orthogonal_residual(pixels, selected) -> Array:
    """Project the selected columns out of every pixel: P_perp @ X computed
    through an orthonormal basis of X[:, selected]. Raises
    :class:`RankDeficiencyError` when the selection is rank deficient."""
    X = pixel_data(pixels)
    idx = list(selected)
    if not idx:
        return X.copy()
    sub = X[:, idx]
    svals = np.linalg.svd(sub, compute_uv=False)
    if svals[-1] <= RANK_GUARD * svals[0]:
        raise RankDeficiencyError(f"selected columns {idx} are rank deficient")
    basis, _ = np.linalg.qr(sub)
    return X - basis @ (basis.T @ X)


def projected_norm_scores(residual: Array) -> Array:
    """Squared projected column norms; the q = inf selection criterion."""
    return np.einsum("ij,ij->j", residual, residual)


def correlation_scores(residual: Array, pixels, q: float) -> Array:
    """||R^T x[n]||_q for every pixel n (the literal selection criterion)."""
    X = pixel_data(pixels)
    corr = np.abs(residual.T @ X)
    if math.isinf(q):
        return corr.max(axis=0)
    return (corr**q).sum(axis=0) ** (1.0 / q)


def greedy_select(residual: Array, pixels, q: float = math.inf) -> tuple[int, float]:
    """Argmax of the selection score over all pixels, lowest index on ties.
    For q = inf the equivalent projected-norm form is used and the score is
    the squared norm."""
    if not np.any(residual):
        raise ValueError("residual is identically zero; selection is undefined")
    if math.isinf(q):
        scores = projected_norm_scores(residual)
    else:
        scores = correlation_scores(residual, pixels, q)
    j = int(np.argmax(scores))
    return j, float(scores[j])


def stopping_rule_1(
    pixels,
    selected,
    delta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    slack: float = RULE_SLACK,
) -> bool:
    """True when every pixel is representable over the selected columns as a
    convex combination within delta (one FCLS solve per pixel). The slack
    absorbs solver tolerance."""
    X = pixel_data(pixels)
    idx = list(selected)
    if not idx:
        raise ValueError("rule 1 needs a non-empty selection")
    batch = solve_simplex_ls_batch(X, X[:, idx], tol=tol, max_iter=max_iter)
    return bool(np.all(batch.residual_norms <= delta + slack))


def stopping_rule_2(
    pixels,
    selected,
    next_index: int,
    delta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    slack: float = RULE_SLACK,
) -> bool:
    """True when the single upcoming greedy candidate is representable over
    the selected columns as a convex combination within delta."""
    X = pixel_data(pixels)
    idx = list(selected)
    if not idx:
        raise ValueError("rule 2 needs a non-empty selection")
    sol = solve_simplex_ls(X[:, int(next_index)], X[:, idx], tol=tol, max_iter=max_iter)
    return bool(sol.residual_norm <= delta + slack)


def run_sd_somp(pixels, config: SompConfig) -> tuple[IndexSet, SelectionTrace]:
    """Run the pursuit until the configured stopping rule fires.

    Returns the selected indices in selection order plus a per-iteration
    trace. At least one selection is always made; the stop reason is one of
    "residual-floor", "rule1", "rule2", "fixed-iterations",
    "rank-deficient", or "max-endmembers".
    """
    X = pixel_data(pixels)
    M, L = X.shape
    x_fro = float(np.linalg.norm(X))
    if x_fro == 0.0:
        raise ValueError("pixel matrix is identically zero")
    cap = min(M, L)
    if config.max_endmembers is not None:
        if config.max_endmembers < 1:
            raise ValueError("max_endmembers must be at least 1")
        cap = min(cap, config.max_endmembers)
    if config.stopping == "fixed" and config.n_iterations > cap:
        raise ValueError(f"n_iterations {config.n_iterations} exceeds the selection cap {cap}")

    basis = np.empty((M, 0))
    R = X.copy()
    selected: list[int] = []
    steps: list[SelectionStep] = []
    stopped_by = None
    stop_statistic = None
    rule2_stat: float | None = None

    while True:
        fro = float(np.linalg.norm(R))
        if fro <= config.residual_floor * x_fro:
            stopped_by = "residual-floor"  # nothing left to select
            stop_statistic = fro / x_fro
            break

        if math.isinf(config.q):
            scores = projected_norm_scores(R)
        else:
            scores = correlation_scores(R, X, config.q)
        j = int(np.argmax(scores))
        score = float(scores[j])

        if config.stopping == "rule2" and selected:
            sol = solve_simplex_ls(
                X[:, j], X[:, selected], tol=config.solver_tol, max_iter=config.solver_max_iter
            )
            rule2_stat = sol.residual_norm
            if rule2_stat <= config.delta + config.rule_slack:
                stopped_by = "rule2"  # candidate already representable; do not commit it
                stop_statistic = rule2_stat
                break

        # Rank guard: the winning column must leave a usable basis direction.
        r_j = R[:, j]
        norm_j = float(np.linalg.norm(r_j))
        if norm_j <= RANK_GUARD * x_fro:
            stopped_by = "rank-deficient"
            stop_statistic = norm_j / x_fro
            break

        u = r_j / norm_j
        if basis.shape[1]:
            u = u - basis @ (basis.T @ u)  # re-orthogonalize for numerical safety
            u /= np.linalg.norm(u)
        basis = np.column_stack([basis, u])
        R = R - u[:, None] * (u @ R)
        selected.append(j)
        residual_fro = float(np.linalg.norm(R))

        statistic: float | None = None
        if config.stopping == "rule1":
            batch = solve_simplex_ls_batch(
                X, X[:, selected], tol=config.solver_tol, max_iter=config.solver_max_iter
            )
            statistic = float(batch.residual_norms.max())
        elif config.stopping == "rule2":
            statistic = rule2_stat  # residual the candidate had to beat to get committed
            rule2_stat = None
        elif config.stopping == "residual":
            statistic = residual_fro / x_fro

        steps.append(
            SelectionStep(
                index=j,
                score=score,
                residual_frobenius=residual_fro,
                stopping_statistic=statistic,
            )
        )

        if config.stopping == "rule1" and statistic <= config.delta + config.rule_slack:
            stopped_by = "rule1"
            stop_statistic = statistic
            break
        if config.stopping == "residual" and residual_fro <= config.residual_floor * x_fro:
            stopped_by = "residual-floor"
            stop_statistic = residual_fro / x_fro
            break
        if config.stopping == "fixed" and len(selected) >= config.n_iterations:
            stopped_by = "fixed-iterations"
            break
        if len(selected) >= cap:
            stopped_by = "max-endmembers"
            break

    trace = SelectionTrace(steps=tuple(steps), stopped_by=stopped_by, stop_statistic=stop_statistic)
    return IndexSet(tuple(selected)), trace
