import numpy as np
import pytest

from helpers import grid_search_objective
from purepix.simplexls import (
    kkt_residual,
    project_to_simplex,
    solve_simplex_ls,
    solve_simplex_ls_batch,
)


class TestProjection:
    def test_point_on_simplex_is_fixed(self):
        v = np.array([0.2, 0.5, 0.3])
        assert np.allclose(project_to_simplex(v), v, atol=1e-15)

    def test_projection_matches_exhaustive_check(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.standard_normal(4) * 3
            p = project_to_simplex(v)
            assert np.all(p >= 0) and abs(p.sum() - 1.0) <= 1e-12
            # No grid point may be closer than the claimed projection.
            ticks = np.linspace(0, 1, 41)
            for a in ticks:
                for b in ticks[ticks <= 1 - a + 1e-12]:
                    for c in ticks[ticks <= 1 - a - b + 1e-12]:
                        q = np.array([a, b, c, 1 - a - b - c])
                        assert np.linalg.norm(v - p) <= np.linalg.norm(v - q) + 1e-9

    def test_columnwise_projection(self):
        rng = np.random.default_rng(1)
        V = rng.standard_normal((5, 7))
        P = project_to_simplex(V)
        for j in range(7):
            assert np.allclose(P[:, j], project_to_simplex(V[:, j]), atol=1e-14)


class TestSolve:
    def test_vertex_target(self):
        rng = np.random.default_rng(2)
        B = rng.uniform(size=(6, 4))
        sol = solve_simplex_ls(B[:, 2], B)
        assert sol.converged
        assert sol.residual_norm <= 1e-10
        assert np.allclose(sol.coefficients, np.eye(4)[2], atol=1e-8)

    def test_interior_point_of_orthogonal_hull(self):
        b1 = np.array([2.0, 0.0, 0.0])
        b2 = np.array([0.0, 3.0, 0.0])
        target = 0.5 * b1 + 0.5 * b2
        sol = solve_simplex_ls(target, np.column_stack([b1, b2]))
        assert sol.residual_norm <= 1e-10
        assert np.allclose(sol.coefficients, [0.5, 0.5], atol=1e-9)

    def test_outside_hull_matches_fine_grid(self):
        rng = np.random.default_rng(3)
        B = rng.standard_normal((3, 2))
        target = rng.standard_normal(3) * 2.0
        sol = solve_simplex_ls(target, B)
        oracle = grid_search_objective(target, B, 1e-4)
        assert sol.residual_norm**2 <= oracle + 1e-6
        assert sol.residual_norm**2 >= oracle - 1e-6

    def test_matches_grid_for_small_dictionaries(self):
        rng = np.random.default_rng(4)
        for trial in range(20):
            k = int(rng.integers(1, 4))
            B = rng.standard_normal((4, k))
            target = rng.standard_normal(4)
            sol = solve_simplex_ls(target, B)
            oracle = grid_search_objective(target, B, 1e-3)
            assert sol.residual_norm**2 <= oracle + 1e-5

    def test_objective_trace_is_monotone(self):
        rng = np.random.default_rng(5)
        B = rng.uniform(size=(8, 3))
        sol = solve_simplex_ls(rng.uniform(size=8), B, record_objectives=True)
        trace = np.asarray(sol.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_never_worse_than_any_vertex(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            B = rng.standard_normal((5, 4))
            x = rng.standard_normal(5)
            sol = solve_simplex_ls(x, B)
            best_vertex = min(np.linalg.norm(x - B[:, j]) ** 2 for j in range(4))
            assert sol.residual_norm**2 <= best_vertex + 1e-9

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        B = rng.standard_normal((6, 4))
        x = rng.standard_normal(6)
        sol = solve_simplex_ls(x, B)
        perm = np.array([2, 0, 3, 1])
        sol_p = solve_simplex_ls(x, B[:, perm])
        assert sol_p.residual_norm == pytest.approx(sol.residual_norm, abs=1e-8)
        assert np.allclose(sol_p.coefficients, sol.coefficients[perm], atol=1e-8)

    def test_duplicate_columns_keep_residual_semantics(self):
        rng = np.random.default_rng(8)
        B = rng.uniform(size=(5, 2))
        B_dup = np.column_stack([B, B[:, 0]])
        x = rng.uniform(size=5)
        plain = solve_simplex_ls(x, B)
        dup = solve_simplex_ls(x, B_dup)
        assert dup.residual_norm == pytest.approx(plain.residual_norm, abs=1e-7)

    def test_residual_norm_consistent_with_coefficients(self):
        rng = np.random.default_rng(9)
        B = rng.standard_normal((7, 3))
        x = rng.standard_normal(7)
        sol = solve_simplex_ls(x, B)
        assert sol.residual_norm**2 == pytest.approx(
            float(np.linalg.norm(x - B @ sol.coefficients) ** 2), abs=1e-10
        )

    def test_input_validation(self):
        with pytest.raises(ValueError, match="non-empty"):
            solve_simplex_ls(np.ones(3), np.ones((3, 0)))
        with pytest.raises(ValueError, match="non-finite"):
            solve_simplex_ls(np.array([1.0, np.nan]), np.ones((2, 1)))
        with pytest.raises(ValueError, match="tol"):
            solve_simplex_ls(np.ones(2), np.ones((2, 1)), tol=0.0)
        with pytest.raises(ValueError, match="row count"):
            solve_simplex_ls(np.ones(3), np.ones((2, 1)))


class TestKkt:
    def test_zero_at_exact_solution(self):
        rng = np.random.default_rng(10)
        B = rng.uniform(size=(6, 3))
        sol = solve_simplex_ls(B[:, 1], B)
        assert kkt_residual(sol.coefficients, B[:, 1], B) <= 1e-10

    def test_positive_at_wrong_vertex(self):
        rng = np.random.default_rng(11)
        B = rng.standard_normal((5, 2))
        x = B[:, 1]
        assert kkt_residual(np.array([1.0, 0.0]), x, B) > 1e-6

    def test_solver_self_check(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            B = rng.standard_normal((6, 3))
            x = rng.standard_normal(6)
            sol = solve_simplex_ls(x, B, tol=1e-10)
            assert sol.converged
            assert kkt_residual(sol.coefficients, x, B) <= 1e-6


class TestBatch:
    def test_matches_single_solves(self):
        rng = np.random.default_rng(13)
        B = rng.uniform(size=(6, 3))
        X = rng.uniform(size=(6, 10))
        batch = solve_simplex_ls_batch(X, B)
        assert batch.converged
        for j in range(10):
            single = solve_simplex_ls(X[:, j], B)
            assert batch.residual_norms[j] == pytest.approx(single.residual_norm, abs=1e-8)

    def test_batch_kkt_within_tolerance(self):
        rng = np.random.default_rng(14)
        B = rng.uniform(size=(8, 4))
        X = rng.uniform(size=(8, 30))
        batch = solve_simplex_ls_batch(X, B, tol=1e-9)
        assert batch.converged
        assert batch.kkt.max() <= 1e-9
