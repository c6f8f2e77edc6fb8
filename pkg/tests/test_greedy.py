import math

import numpy as np
import pytest

from purepix.greedy import (
    RankDeficiencyError,
    SompConfig,
    correlation_scores,
    greedy_select,
    orthogonal_residual,
    projected_norm_scores,
    run_sd_somp,
    stopping_rule_1,
    stopping_rule_2,
)
from purepix.metrics import detection
from purepix.model import generate_synthetic
from purepix.oracle import diagnostics


class TestConfig:
    def test_q_must_exceed_one(self):
        with pytest.raises(ValueError, match="q must"):
            SompConfig(q=1.0)

    def test_unknown_stopping(self):
        with pytest.raises(ValueError, match="stopping"):
            SompConfig(stopping="early")

    def test_fixed_needs_iterations(self):
        with pytest.raises(ValueError, match="n_iterations"):
            SompConfig(stopping="fixed")

    def test_negative_delta(self):
        with pytest.raises(ValueError, match="delta"):
            SompConfig(delta=-0.1)


class TestResidual:
    def test_empty_selection_returns_data(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(4, 6))
        assert np.array_equal(orthogonal_residual(X, []), X)

    def test_spanning_selection_annihilates_everything(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((4, 8))
        R = orthogonal_residual(X, [0, 3, 5, 7])
        assert np.abs(R).max() <= 1e-10 * np.linalg.norm(X)

    def test_single_column_matches_rank_one_projector(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((4, 6))
        a = X[:, 2]
        expected = (np.eye(4) - np.outer(a, a) / (a @ a)) @ X
        assert np.allclose(orthogonal_residual(X, [2]), expected, atol=1e-10)

    def test_selected_columns_have_tiny_residual(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(10, 20))
        R = orthogonal_residual(X, [4, 11, 17])
        norms = np.linalg.norm(R[:, [4, 11, 17]], axis=0)
        assert norms.max() <= 1e-8 * np.linalg.norm(X)

    def test_rank_deficient_selection_is_signaled(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(size=(5, 6))
        X[:, 3] = X[:, 1]
        with pytest.raises(RankDeficiencyError):
            orthogonal_residual(X, [1, 3])


class TestGreedySelect:
    def test_hand_instance_ties_break_low(self):
        X = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
        idx, score = greedy_select(X.copy(), X, math.inf)
        assert idx == 0  # columns 0 and 1 tie at norm 1; lowest index wins
        assert score == pytest.approx(1.0)

    def test_projection_removes_selected_direction(self):
        X = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
        R = orthogonal_residual(X, [0])
        idx, _ = greedy_select(R, X, math.inf)
        assert idx == 1

    def test_finite_q_matches_exhaustive_scan(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((5, 12))
        R = orthogonal_residual(X, [7])
        for q in (2.0, 5.0):
            scores = correlation_scores(R, X, q)
            manual = np.array([np.linalg.norm(R.T @ X[:, n], ord=q) for n in range(12)])
            assert np.allclose(scores, manual, atol=1e-12)
            idx, score = greedy_select(R, X, q)
            assert idx == int(np.argmax(manual))
            assert score == pytest.approx(float(manual.max()))

    def test_zero_residual_is_rejected(self):
        X = np.ones((3, 2))
        with pytest.raises(ValueError, match="zero"):
            greedy_select(np.zeros((3, 2)), X, math.inf)


class TestRunNoiseless:
    def test_recovers_complete_pure_pixel_set(self):
        inst = generate_synthetic(3, 40, n_bands=10, snr_db=math.inf, seed=7)
        selected, trace = run_sd_somp(inst.pixels, SompConfig(stopping="residual"))
        assert len(selected) == 3
        assert trace.stopped_by == "residual-floor"
        assert detection(selected, inst.pure_pixel_set, inst)

    def test_repeated_pure_pixels_still_recover(self):
        inst = generate_synthetic(3, 60, n_bands=12, snr_db=math.inf, pure_repeats=3, seed=9)
        selected, _ = run_sd_somp(inst.pixels, SompConfig(stopping="residual"))
        assert len(selected) == 3
        assert detection(selected, inst.pure_pixel_set, inst)

    def test_single_pixel(self):
        X = np.array([[1.0], [2.0]])
        selected, trace = run_sd_somp(X, SompConfig(stopping="residual"))
        assert list(selected) == [0]
        assert trace.stopped_by == "residual-floor"

    def test_fixed_iteration_count(self):
        inst = generate_synthetic(4, 50, n_bands=10, snr_db=30.0, seed=11)
        selected, trace = run_sd_somp(inst.pixels, SompConfig(stopping="fixed", n_iterations=2))
        assert len(selected) == 2
        assert trace.stopped_by == "fixed-iterations"

    def test_max_endmembers_cap(self):
        inst = generate_synthetic(4, 50, n_bands=10, snr_db=20.0, seed=12)
        selected, trace = run_sd_somp(
            inst.pixels, SompConfig(stopping="rule2", delta=0.0, max_endmembers=2)
        )
        assert len(selected) == 2
        assert trace.stopped_by == "max-endmembers"

    def test_rank_guard_reported(self):
        rng = np.random.default_rng(13)
        a, b = rng.uniform(size=5), rng.uniform(size=5)
        X = np.column_stack([a, a + 1e-13 * rng.standard_normal(5), b])
        _, trace = run_sd_somp(X, SompConfig(stopping="fixed", n_iterations=3, residual_floor=0.0))
        assert trace.stopped_by == "rank-deficient"


class TestStoppingRules:
    def test_rule1_true_on_noiseless_complete_selection(self):
        inst = generate_synthetic(3, 30, n_bands=8, snr_db=math.inf, seed=20)
        assert stopping_rule_1(inst.pixels, list(inst.pure_pixel_set), 0.0)

    def test_rule1_false_when_one_endmember_missing(self):
        inst = generate_synthetic(3, 30, n_bands=8, snr_db=math.inf, seed=21)
        sigma_min = diagnostics(inst).sigma_min
        partial = list(inst.pure_pixel_set)[:2]
        assert not stopping_rule_1(inst.pixels, partial, 0.5 * sigma_min)

    def test_rule1_vacuous_threshold(self):
        inst = generate_synthetic(3, 30, n_bands=8, snr_db=25.0, seed=22)
        assert stopping_rule_1(inst.pixels, [0], math.inf)

    def test_rule2_true_for_representable_candidate(self):
        inst = generate_synthetic(3, 30, n_bands=8, snr_db=math.inf, seed=23)
        pure = list(inst.pure_pixel_set)
        interior = next(n for n in range(30) if n not in pure)
        assert stopping_rule_2(inst.pixels, pure, interior, 1e-6)

    def test_rule2_false_below_sigma_min(self):
        inst = generate_synthetic(3, 30, n_bands=8, snr_db=math.inf, seed=24)
        sigma_min = diagnostics(inst).sigma_min
        pure = list(inst.pure_pixel_set)
        assert not stopping_rule_2(inst.pixels, pure[:2], pure[2], 0.5 * sigma_min)

    def test_rules_agree_on_noiseless_complete_selection(self):
        inst = generate_synthetic(3, 30, n_bands=8, snr_db=math.inf, seed=25)
        pure = list(inst.pure_pixel_set)
        interior = next(n for n in range(30) if n not in pure)
        r1 = stopping_rule_1(inst.pixels, pure, 0.0)
        r2 = stopping_rule_2(inst.pixels, pure, interior, 0.0)
        assert r1 == r2

    def test_rules_need_a_selection(self):
        inst = generate_synthetic(2, 10, n_bands=5, seed=26)
        with pytest.raises(ValueError, match="non-empty"):
            stopping_rule_1(inst.pixels, [], 0.1)
        with pytest.raises(ValueError, match="non-empty"):
            stopping_rule_2(inst.pixels, [], 0, 0.1)


class TestInvariants:
    def test_no_repeated_selections_and_monotone_residual(self):
        for seed in range(8):
            inst = generate_synthetic(4, 80, n_bands=12, snr_db=18.0, seed=seed)
            selected, trace = run_sd_somp(
                inst.pixels, SompConfig(stopping="fixed", n_iterations=6)
            )
            assert len(set(selected)) == len(selected)
            fro = [s.residual_frobenius for s in trace.steps]
            assert all(a >= b - 1e-9 for a, b in zip(fro, fro[1:]))

    def test_observation_equivalence_inf_norm(self):
        # Eq.-(8) scan with the sup norm vs the projected-norm shortcut.
        rng = np.random.default_rng(31)
        for _ in range(100):
            n_end = int(rng.integers(2, 7))
            L = int(rng.integers(10, 60))
            X = rng.uniform(size=(int(rng.integers(n_end + 1, 12)), L))
            selected: list[int] = []
            for _ in range(n_end):
                R = orthogonal_residual(X, selected)
                if np.linalg.norm(R) <= 1e-9 * np.linalg.norm(X):
                    break
                literal = int(np.argmax(correlation_scores(R, X, math.inf)))
                fast = int(np.argmax(projected_norm_scores(R)))
                assert literal == fast
                selected.append(fast)

    def test_scale_invariance_of_selection(self):
        inst = generate_synthetic(4, 60, n_bands=10, snr_db=25.0, seed=33)
        X = inst.pixels.data
        for q in (2.0, math.inf):
            cfg = SompConfig(stopping="fixed", n_iterations=4, q=q)
            base, _ = run_sd_somp(X, cfg)
            scaled, _ = run_sd_somp(3.7 * X, cfg)
            assert list(base) == list(scaled)

    def test_permutation_equivariance(self):
        inst = generate_synthetic(4, 60, n_bands=10, snr_db=25.0, seed=34)
        X = inst.pixels.data
        rng = np.random.default_rng(35)
        perm = rng.permutation(60)
        cfg = SompConfig(stopping="fixed", n_iterations=4)
        base, _ = run_sd_somp(X, cfg)
        permuted, _ = run_sd_somp(X[:, perm], cfg)
        inverse = np.empty(60, dtype=int)
        inverse[perm] = np.arange(60)
        assert [int(inverse[i]) for i in base] == list(permuted)

    def test_noiseless_recovery_over_q_values(self):
        for seed in range(10):
            n_end = 2 + seed % 7  # sizes 2 through 8
            inst = generate_synthetic(n_end, 100, n_bands=16, snr_db=math.inf, seed=100 + seed)
            for q in (2.0, 5.0, math.inf):
                selected, _ = run_sd_somp(inst.pixels, SompConfig(q=q, stopping="residual"))
                assert detection(selected, inst.pure_pixel_set, inst)

    def test_model_order_exact_at_moderate_noise(self):
        # Below the relaxed eta-scaled noise levels the pursuit finds the
        # exact number of atoms with either rule even when the selected
        # pixels are only near-pure, for any tolerance at the window floor
        # (1 + eta) * eps.
        from helpers import bounded_noise_instance

        for seed in range(6):
            inst = bounded_noise_instance(3, 200, 10, seed=600 + seed, level="greedy")
            diag = diagnostics(inst)
            eps = inst.noise_bound_true
            assert eps < diag.sigma_min / (4.0 * (1.25 + math.sqrt(3) * diag.eta_proxy))
            delta = (1.0 + diag.eta_proxy) * eps
            for rule in ("rule1", "rule2"):
                selected, _ = run_sd_somp(inst.pixels, SompConfig(stopping=rule, delta=delta))
                assert len(selected) == 3

    def test_trace_statistics_present_per_mode(self):
        inst = generate_synthetic(3, 40, n_bands=8, snr_db=30.0, seed=40)
        _, trace1 = run_sd_somp(inst.pixels, SompConfig(stopping="rule1", delta=0.5))
        assert all(s.stopping_statistic is not None for s in trace1.steps)
        _, trace2 = run_sd_somp(inst.pixels, SompConfig(stopping="rule2", delta=0.5))
        assert trace2.steps[0].stopping_statistic is None
        assert all(s.stopping_statistic is not None for s in trace2.steps[1:])
