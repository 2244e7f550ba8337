import numpy as np
import pytest

from conftest import rng_for, scalar_task
from mtlqg.cost import cost_exact, gradient_exact
from mtlqg.errors import NoCommonStabilizer, StepDestabilized, ValidationError
from mtlqg.heterogeneity import average_heterogeneity
from mtlqg.lifting import build_s_star, lifted_optimal_controller
from mtlqg.tasks import LqgTask
from mtlqg.trainer import (TrainConfig, bound_audit, estimate_smoothness,
                           evaluate_generalization, initial_controller, pg_step,
                           train_multitask)


def scalar_family(a_values, p=5):
    tasks = [scalar_task(a=a, task_id=f"t{n}") for n, a in enumerate(a_values)]
    lifts = [build_s_star(t, p) for t in tasks]
    return tasks, lifts


class TestInitialController:
    def test_identical_tasks_give_optimum(self):
        tasks, lifts = scalar_family([0.5] * 4)
        k0, rhos = initial_controller(tasks, lifts, tasks[0], lifts[0])
        k_star = lifted_optimal_controller(tasks[0], lifts[0])
        assert np.allclose(k0.K, k_star.K)
        assert np.all(rhos < 1.0)
        for t, lf in zip(tasks, lifts):
            assert cost_exact(t, lf, k0).J == pytest.approx(
                cost_exact(t, lf, k_star).J, rel=1e-12)

    def test_adversarial_task_rejected(self):
        tasks, lifts = scalar_family([0.5, 0.55])
        bad = scalar_task(a=5.0, task_id="adversarial")
        bad_lift = build_s_star(bad, 5)
        with pytest.raises(NoCommonStabilizer) as info:
            initial_controller(tasks + [bad], lifts + [bad_lift],
                               tasks[0], lifts[0])
        assert "adversarial" in info.value.failed_ids

    def test_empty_tasks_rejected(self):
        tasks, lifts = scalar_family([0.5])
        with pytest.raises(ValidationError):
            initial_controller([], [], tasks[0], lifts[0])

    def test_detune_changes_gain(self):
        tasks, lifts = scalar_family([0.5, 0.6])
        k_plain, _ = initial_controller(tasks, lifts, tasks[0], lifts[0])
        k_detuned, _ = initial_controller(tasks, lifts, tasks[0], lifts[0],
                                          r_detune=0.1)
        assert not np.allclose(k_plain.K, k_detuned.K)


class TestPgStep:
    def test_fixed_point_at_common_optimum(self):
        tasks, lifts = scalar_family([0.5] * 3)
        k_star = lifted_optimal_controller(tasks[0], lifts[0])
        config = TrainConfig(alpha=1e-3, iterations=1)
        k_next = pg_step(tasks, lifts, k_star, config)
        assert np.allclose(k_next.K, k_star.K, atol=1e-12)

    def test_single_task_descent(self):
        tasks, lifts = scalar_family([0.5])
        k = 0.8 * lifted_optimal_controller(tasks[0], lifts[0]).K
        config = TrainConfig(alpha=1e-3, iterations=1)
        j_before = cost_exact(tasks[0], lifts[0], k).J
        k_next = pg_step(tasks, lifts, k, config)
        assert cost_exact(tasks[0], lifts[0], k_next).J < j_before

    def test_aggregation_is_fixed_order_mean(self):
        tasks, lifts = scalar_family([0.45, 0.5, 0.62])
        k = 0.9 * lifted_optimal_controller(tasks[1], lifts[1]).K
        grads = [gradient_exact(t, lf, k).grad for t, lf in zip(tasks, lifts)]
        mean = sum(grads[1:], grads[0].copy()) / 3
        alpha = 1e-3
        k_next = pg_step(tasks, lifts, k, TrainConfig(alpha=alpha, iterations=1))
        assert np.linalg.norm(k_next.K - (k - alpha * mean)) <= 1e-12

    def test_destabilizing_step_rejected(self):
        tasks, lifts = scalar_family([0.95])
        k = lifted_optimal_controller(tasks[0], lifts[0])
        config = TrainConfig(alpha=1e6, iterations=1)
        k_moved = 0.97 * k.K  # slightly off-optimum so the gradient is nonzero
        with pytest.raises(StepDestabilized):
            pg_step(tasks, lifts, k_moved, config)


class TestTrainMultitask:
    def test_single_task_geometric_decay(self):
        tasks, lifts = scalar_family([0.5])
        from dataclasses import replace

        detuned = replace(tasks[0], R=0.005 * tasks[0].R)
        k0 = lifted_optimal_controller(detuned, lifts[0])
        config = TrainConfig(alpha="auto", iterations=60, log_every=1, seed=0)
        final, log = train_multitask(tasks, lifts, config, k0)
        _, gaps = log.task_series("gap")["t0"]
        assert gaps[-1] <= 1e-6 * (1 + cost_exact(tasks[0], lifts[0], final).J)
        # geometric: strictly decreasing until numerically converged
        live = gaps > 1e-13
        assert np.sum(live) >= 5
        assert np.all(np.diff(gaps[live]) < 0)
        assert gaps[0] > 1e3 * max(gaps[-1], 1e-13)

    def test_identical_pair_matches_single(self):
        single_tasks, single_lifts = scalar_family([0.5])
        pair_tasks, pair_lifts = scalar_family([0.5, 0.5])
        k0 = lifted_optimal_controller(single_tasks[0], single_lifts[0])
        k0 = type(k0)(K=0.9 * k0.K, p=k0.p)
        config = TrainConfig(alpha=1e-3, iterations=50, log_every=10, seed=0)
        f1, log1 = train_multitask(single_tasks, single_lifts, config, k0)
        f2, log2 = train_multitask(pair_tasks, pair_lifts, config, k0)
        assert np.allclose(f1.K, f2.K, atol=1e-14)
        costs1 = log1.task_series("cost")["t0"][1]
        costs2 = log2.task_series("cost")["t0"][1]
        assert np.allclose(costs1, costs2, rtol=1e-14)

    def test_early_stop_on_destabilizing_alpha(self):
        tasks, lifts = scalar_family([0.9])
        k0 = lifted_optimal_controller(tasks[0], lifts[0])
        k0 = type(k0)(K=0.9 * k0.K, p=k0.p)
        config = TrainConfig(alpha=1e7, iterations=50, log_every=1, seed=0)
        final, log = train_multitask(tasks, lifts, config, k0)
        assert log.early_stopped
        # the returned controller still stabilizes the task
        cost_exact(tasks[0], lifts[0], final)

    def test_exact_mode_deterministic(self):
        tasks, lifts = scalar_family([0.5, 0.6])
        k0, _ = initial_controller(tasks, lifts, tasks[0], lifts[0])
        config = TrainConfig(alpha=1e-3, iterations=30, log_every=5, seed=0)
        _, log1 = train_multitask(tasks, lifts, config, k0)
        _, log2 = train_multitask(tasks, lifts, config, k0)
        assert log1.rows == log2.rows

    def test_zeroth_order_mode_runs_and_is_seeded(self):
        from mtlqg.rollout import RolloutConfig

        tasks, lifts = scalar_family([0.5], p=6)
        k0 = lifted_optimal_controller(tasks[0], lifts[0])
        k0 = type(k0)(K=0.92 * k0.K, p=k0.p)
        rollout = RolloutConfig(tau=120, n_c=1, n_s=24, r=0.02, seed=5, burn_in=6)
        config = TrainConfig(alpha=5e-4, iterations=12, mode="zeroth_order",
                             rollout=rollout, log_every=4, seed=5)
        f1, log1 = train_multitask(tasks, lifts, config, k0)
        f2, log2 = train_multitask(tasks, lifts, config, k0)
        assert np.array_equal(f1.K, f2.K)
        assert log1.rows == log2.rows

    def test_log_csv_format(self, tmp_path):
        tasks, lifts = scalar_family([0.5])
        k0 = lifted_optimal_controller(tasks[0], lifts[0])
        config = TrainConfig(alpha=1e-3, iterations=5, log_every=1, seed=0)
        _, log = train_multitask(tasks, lifts, config, k0)
        path = tmp_path / "log.csv"
        log.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,task_id,cost,gap,grad_norm,rho_max,b_i"
        assert len(lines) == 1 + 6
        assert "e" in lines[1].split(",")[2]  # scientific notation


class TestSmoothnessEstimate:
    def test_positive_and_reproducible(self):
        tasks, lifts = scalar_family([0.5])
        k_star = lifted_optimal_controller(tasks[0], lifts[0])
        l1 = estimate_smoothness(tasks, lifts, k_star, seed=3)
        l2 = estimate_smoothness(tasks, lifts, k_star, seed=3)
        assert l1 == l2 > 0


class TestEvaluateGeneralization:
    def test_test_equals_train(self):
        tasks, lifts = scalar_family([0.5, 0.55, 0.6])
        k0, _ = initial_controller(tasks, lifts, tasks[1], lifts[1])
        report = evaluate_generalization(k0, tasks, tasks, lifts, lifts)
        assert report.gap == pytest.approx(0.0, abs=1e-12)
        assert report.test_stabilized_fraction == 1.0

    def test_unstable_test_task_excluded_and_counted(self):
        tasks, lifts = scalar_family([0.5, 0.55])
        bad = scalar_task(a=5.0, task_id="far")
        bad_lift = build_s_star(bad, 5)
        k0, _ = initial_controller(tasks, lifts, tasks[0], lifts[0])
        report = evaluate_generalization(k0, tasks, tasks + [bad],
                                         lifts, lifts + [bad_lift])
        assert report.test_stabilized_fraction == pytest.approx(2 / 3)
        assert np.isnan(report.test_costs[-1])
        assert np.isfinite(report.test_mean)


class TestBoundAudit:
    def test_identical_tasks_at_optimum(self):
        tasks, lifts = scalar_family([0.5] * 3)
        k_star = lifted_optimal_controller(tasks[0], lifts[0])
        b = average_heterogeneity(tasks, lifts, k_star)
        rows = bound_audit(tasks, lifts, k_star, b)
        for row in rows:
            assert row.gap == pytest.approx(0.0, abs=1e-9)
            assert row.bound == pytest.approx(0.0, abs=1e-9)
            assert row.holds and row.holds_3x

    def test_theorem_two_scalar_pair(self):
        # converge the two-task problem, then audit the gap bound
        tasks, lifts = scalar_family([0.45, 0.6])
        k0, _ = initial_controller(tasks, lifts, tasks[0], lifts[0])
        config = TrainConfig(alpha="auto", iterations=6000, log_every=1000, seed=0)
        final, log = train_multitask(tasks, lifts, config, k0)
        assert not log.early_stopped
        b = average_heterogeneity(tasks, lifts, final)
        rows = bound_audit(tasks, lifts, final, b)
        for row in rows:
            assert np.isfinite(row.bound)  # scalar tasks: full-rank Sigma_nu
            assert row.holds and row.holds_3x

    def test_vacuous_bound_for_rank_deficient_noise(self, cartpole_nominal,
                                                    cartpole_lift):
        k_star = lifted_optimal_controller(cartpole_nominal, cartpole_lift)
        k = type(k_star)(K=0.98 * k_star.K, p=k_star.p)
        rows = bound_audit([cartpole_nominal], [cartpole_lift], k, [1.0])
        assert rows[0].bound == np.inf and rows[0].holds
