import json

import numpy as np
import pytest

from mtlqg.errors import AssumptionViolated, ValidationError
from mtlqg.tasks import (CARTPOLE_INTERVALS, TaskDistributionSpec, euler_discretize,
                         load_tasks, make_cartpole_task, make_pendulum_task,
                         nominal_task, sample_training_set, save_tasks,
                         tasks_from_json, tasks_to_json)


class TestEulerDiscretize:
    def test_zero_dynamics(self):
        a, b = euler_discretize(np.zeros((3, 3)), np.zeros((3, 1)), 0.05)
        assert np.array_equal(a, np.eye(3))
        assert np.array_equal(b, np.zeros((3, 1)))

    def test_pendulum_entry(self):
        task = make_pendulum_task(0.5, 0.3, 0.1, 0.1, 0.02, 0.05)
        assert task.A[1, 0] == pytest.approx(0.05 * 9.81 / 0.3)  # = 1.635

    def test_cartpole_entry(self):
        task = make_cartpole_task(0.1, 1.0, 0.5, 0.1, 0.1, 0.12, 0.15)
        assert task.A[1, 2] == pytest.approx(0.05 * 9.81 * 0.1 / 1.0)  # = 0.04905


class TestCartpole:
    def test_nominal_matrices(self):
        t = make_cartpole_task(0.1, 1.0, 0.5, 0.1, 0.1, 0.12, 0.15)
        a_expected = np.eye(4) + 0.05 * np.array([
            [0, 1, 0, 0],
            [0, 0, 0.1 * 9.81, 0],
            [0, 0, 0, 1],
            [0, 0, (1.1 / 0.5) * 9.81, 0],
        ])
        b_expected = 0.05 * np.array([[0.0], [1.0], [0.0], [2.0]])
        assert np.allclose(t.A, a_expected)
        assert np.allclose(t.B, b_expected)
        assert np.array_equal(t.C, np.array([[1, 0, 0, 0], [0, 1, 0, 1]], dtype=float))

    def test_noise_scales(self):
        t = make_cartpole_task(0.1, 1.0, 0.5, 0.1, 0.1, 0.12, 0.15)
        assert np.array_equal(t.W, 0.12 * np.eye(4))
        assert np.array_equal(t.V, 0.15 * np.eye(2))

    def test_output_cost_dimension(self):
        t = make_cartpole_task(0.1, 1.0, 0.5, 0.07, 0.1, 0.12, 0.15)
        assert t.Q.shape == (2, 2)
        assert np.array_equal(t.Q, 0.07 * np.eye(2))

    def test_doubling_cart_mass_halves_b(self):
        t1 = make_cartpole_task(0.1, 1.0, 0.5, 0.1, 0.1, 0.12, 0.15)
        t2 = make_cartpole_task(0.1, 2.0, 0.5, 0.1, 0.1, 0.12, 0.15)
        assert np.allclose(t2.B, 0.5 * t1.B)

    def test_assumption_holds(self):
        make_cartpole_task(0.1, 1.0, 0.5, 0.1, 0.1, 0.12, 0.15).validate()


class TestPendulum:
    def test_nominal(self):
        t = make_pendulum_task(0.5, 0.3, 0.1, 0.1, 0.02, 0.05)
        assert np.allclose(t.A, np.array([[1.0, 0.05], [1.635, 1.0]]))
        assert t.B[1, 0] == pytest.approx(0.05 / (0.5 * 0.09))  # ~1.1111
        assert np.array_equal(t.C, np.array([[1.0, 0.0]]))

    def test_noise_scales(self):
        t = make_pendulum_task(0.5, 0.3, 0.1, 0.1, 0.02, 0.05)
        assert np.array_equal(t.W, 0.02 * np.eye(2))
        assert np.array_equal(t.V, 0.05 * np.eye(1))


class TestSampling:
    def test_benchmark_intervals(self):
        spec = TaskDistributionSpec.benchmark_default("cartpole", seed=0, count=20)
        assert spec.intervals == {k: tuple(v) for k, v in CARTPOLE_INTERVALS.items()}
        tasks = sample_training_set(spec)
        assert len(tasks) == 20
        for t in tasks:
            assert 0.095 <= t.params["m_p"] <= 0.105
            assert 0.95 <= t.params["m_c"] <= 1.05
            assert 0.475 <= t.params["l"] <= 0.525
            assert 0.095 <= t.params["q"] <= 0.105
            t.validate()

    def test_degenerate_intervals(self):
        spec = TaskDistributionSpec.benchmark_default("cartpole", seed=0, count=3)
        spec.intervals = {k: (0.1, 0.1) if k != "m_c" else (1.0, 1.0)
                          for k in spec.intervals}
        spec.intervals["l"] = (0.5, 0.5)
        tasks = sample_training_set(spec)
        assert all(np.array_equal(tasks[0].A, t.A) for t in tasks)

    def test_seed_determinism(self):
        spec = TaskDistributionSpec.benchmark_default("pendulum", seed=77, count=6)
        t1 = sample_training_set(spec)
        t2 = sample_training_set(spec)
        for a, b in zip(t1, t2):
            for name in ("A", "B", "C", "W", "V", "Q", "R"):
                assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_count_validation(self):
        with pytest.raises(ValidationError):
            TaskDistributionSpec.benchmark_default("cartpole", seed=0, count=0)

    def test_interval_validation(self):
        spec = TaskDistributionSpec.benchmark_default("cartpole", seed=0, count=1)
        with pytest.raises(ValidationError):
            TaskDistributionSpec(benchmark="cartpole",
                                 intervals={**spec.intervals, "m_p": (0.2, 0.1)},
                                 w_scale=0.12, v_scale=0.15, seed=0, count=1)

    def test_nominal_midpoint(self):
        spec = TaskDistributionSpec.benchmark_default("cartpole", seed=0, count=1)
        nom = nominal_task(spec)
        assert nom.params["m_p"] == pytest.approx(0.1)
        assert nom.params["m_c"] == pytest.approx(1.0)
        assert nom.params["l"] == pytest.approx(0.5)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        spec = TaskDistributionSpec.benchmark_default("cartpole", seed=5, count=4)
        tasks = sample_training_set(spec)
        path = tmp_path / "tasks.json"
        save_tasks(path, tasks, {"benchmark": "cartpole", "seed": 5})
        loaded, meta = load_tasks(path)
        assert meta["benchmark"] == "cartpole"
        assert len(loaded) == 4
        for a, b in zip(tasks, loaded):
            assert a.id == b.id
            assert np.array_equal(a.A, b.A)
            assert np.array_equal(a.W, b.W)

    def test_load_validates_covariances(self):
        spec = TaskDistributionSpec.benchmark_default("pendulum", seed=1, count=1)
        doc = tasks_to_json(sample_training_set(spec))
        doc["tasks"][0]["V"] = [[-1.0]]
        with pytest.raises(ValidationError):
            tasks_from_json(doc)

    def test_load_validates_assumption(self):
        spec = TaskDistributionSpec.benchmark_default("pendulum", seed=1, count=1)
        doc = tasks_to_json(sample_training_set(spec))
        doc["tasks"][0]["C"] = [[0.0, 0.0]]
        with pytest.raises(AssumptionViolated):
            tasks_from_json(doc)

    def test_schema_tag(self):
        with pytest.raises(ValidationError):
            tasks_from_json({"schema": "other", "tasks": []})
