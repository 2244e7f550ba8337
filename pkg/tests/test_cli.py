import json

import numpy as np
import pytest

from mtlqg.cli import main
from mtlqg.io import read_csv
from mtlqg.tasks import load_tasks, save_tasks, tasks_to_json


@pytest.fixture(scope="module")
def task_files(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli-tasks")
    rc = main(["generate-tasks", "--benchmark", "cartpole", "--count", "4",
               "--test-count", "2", "--seed", "3", "--out", str(base)])
    assert rc == 0
    return base


class TestGenerateTasks:
    def test_outputs(self, task_files):
        tasks, meta = load_tasks(task_files / "tasks.json")
        assert len(tasks) == 4
        assert meta["benchmark"] == "cartpole"
        test_tasks, _ = load_tasks(task_files / "test_tasks.json")
        assert len(test_tasks) == 2

    def test_pendulum_counts(self, tmp_path):
        rc = main(["generate-tasks", "--benchmark", "pendulum", "--count", "3",
                   "--seed", "9", "--out", str(tmp_path)])
        assert rc == 0
        tasks, _ = load_tasks(tmp_path / "tasks.json")
        assert len(tasks) == 3 and tasks[0].n_x == 2

    def test_zero_count_is_validation_error(self, tmp_path):
        assert main(["generate-tasks", "--count", "0", "--out", str(tmp_path)]) == 2


class TestTrain:
    def test_exact_mode_and_determinism(self, task_files, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["train", "--tasks", str(task_files / "tasks.json"),
                "--iterations", "50", "--log-every", "10", "--seed", "3"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert (out1 / "train_log.csv").read_bytes() == \
            (out2 / "train_log.csv").read_bytes()
        controller = json.loads((out1 / "controller.json").read_text())
        assert controller["p"] == 10

    def test_zo_mode_flag(self, tmp_path):
        rc = main(["generate-tasks", "--benchmark", "pendulum", "--count", "2",
                   "--seed", "4", "--out", str(tmp_path)])
        assert rc == 0
        rc = main(["train", "--tasks", str(tmp_path / "tasks.json"), "--mode", "zo",
                   "--iterations", "3", "--p", "12", "--alpha", "1e-4",
                   "--n-s", "16", "--tau", "80", "--radius", "0.01",
                   "--detune-r", "0.1", "--seed", "4", "--out", str(tmp_path)])
        assert rc == 0

    def test_eval_csv_written(self, task_files, tmp_path):
        rc = main(["train", "--tasks", str(task_files / "tasks.json"),
                   "--test-tasks", str(task_files / "test_tasks.json"),
                   "--iterations", "20", "--log-every", "10", "--eval-every", "10",
                   "--seed", "3", "--out", str(tmp_path)])
        assert rc == 0
        header, rows = read_csv(tmp_path / "eval.csv")
        assert header == ["iteration", "split", "task_id", "cost", "gap"]
        splits = {r[1] for r in rows}
        assert splits == {"train", "test"}

    def test_numerical_failure_exit_code(self, task_files, tmp_path):
        # inject an adversarial task the nominal gain cannot stabilize
        tasks, meta = load_tasks(task_files / "tasks.json")
        doc = tasks_to_json(tasks, meta)
        bad = dict(doc["tasks"][0])
        bad["id"] = "adversarial"
        bad["A"] = (5.0 * np.eye(4)).tolist()
        doc["tasks"].append(bad)
        bad_path = tmp_path / "bad_tasks.json"
        bad_path.write_text(json.dumps(doc))
        rc = main(["train", "--tasks", str(bad_path), "--iterations", "5",
                   "--seed", "3", "--out", str(tmp_path)])
        assert rc == 3

    def test_missing_file_is_validation_error(self, tmp_path):
        rc = main(["train", "--tasks", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path)])
        assert rc == 2


class TestHeterogeneity:
    def test_certificates_sound(self, task_files, tmp_path):
        train_out = tmp_path / "t"
        assert main(["train", "--tasks", str(task_files / "tasks.json"),
                     "--iterations", "10", "--log-every", "5", "--seed", "3",
                     "--out", str(train_out)]) == 0
        rc = main(["heterogeneity", "--tasks", str(task_files / "tasks.json"),
                   "--controller", str(train_out / "controller.json"),
                   "--seed", "3", "--out", str(tmp_path)])
        assert rc == 0
        header, rows = read_csv(tmp_path / "certificates.csv")
        sound_idx = header.index("sound")
        b_idx = header.index("b_ij")
        eps_idx = header.index("eps_het")
        assert len(rows) == 6  # 4 choose 2
        for row in rows:
            assert row[sound_idx] == "True"
            assert float(row[b_idx]) >= float(row[eps_idx])
        doc = json.loads((tmp_path / "certificates.json").read_text())
        assert "M" in doc["pairs"][0]

    def test_refine_never_worse_and_no_matrices(self, task_files, tmp_path):
        train_out = tmp_path / "t"
        assert main(["train", "--tasks", str(task_files / "tasks.json"),
                     "--iterations", "10", "--log-every", "5", "--seed", "3",
                     "--out", str(train_out)]) == 0
        base_out, ref_out = tmp_path / "base", tmp_path / "ref"
        common = ["heterogeneity", "--tasks", str(task_files / "tasks.json"),
                  "--controller", str(train_out / "controller.json"), "--seed", "3"]
        assert main(common + ["--out", str(base_out)]) == 0
        assert main(common + ["--refine", "--budget", "600", "--no-matrices",
                              "--out", str(ref_out)]) == 0
        _, base_rows = read_csv(base_out / "certificates.csv")
        _, ref_rows = read_csv(ref_out / "certificates.csv")
        for b_row, r_row in zip(base_rows, ref_rows):
            assert float(r_row[2]) <= float(b_row[2]) * (1 + 1e-12)
            assert float(r_row[2]) >= float(r_row[3])  # refined still sound
        doc = json.loads((ref_out / "certificates.json").read_text())
        assert "M" not in doc["pairs"][0]


class TestVarianceStudy:
    def test_small_grid(self, tmp_path):
        assert main(["generate-tasks", "--benchmark", "pendulum", "--count", "4",
                     "--seed", "6", "--out", str(tmp_path)]) == 0
        rc = main(["variance-study", "--tasks", str(tmp_path / "tasks.json"),
                   "--grid", "1,2,4", "--reps", "2", "--n-s", "12", "--tau", "60",
                   "--radius", "0.01", "--p", "12", "--seed", "6",
                   "--out", str(tmp_path)])
        assert rc == 0
        header, rows = read_csv(tmp_path / "variance.csv")
        assert header[:2] == ["n_tasks", "rel_rmse"]
        assert [int(r[0]) for r in rows] == [1, 2, 4]

    def test_grid_exceeding_tasks_rejected(self, tmp_path):
        assert main(["generate-tasks", "--benchmark", "pendulum", "--count", "2",
                     "--seed", "6", "--out", str(tmp_path)]) == 0
        rc = main(["variance-study", "--tasks", str(tmp_path / "tasks.json"),
                   "--grid", "1,8", "--out", str(tmp_path)])
        assert rc == 2


class TestEvaluate:
    def test_report(self, task_files, tmp_path):
        train_out = tmp_path / "t"
        assert main(["train", "--tasks", str(task_files / "tasks.json"),
                     "--iterations", "10", "--log-every", "5", "--seed", "3",
                     "--out", str(train_out)]) == 0
        rc = main(["evaluate", "--tasks", str(task_files / "tasks.json"),
                   "--test-tasks", str(task_files / "test_tasks.json"),
                   "--controller", str(train_out / "controller.json"),
                   "--seed", "3", "--out", str(tmp_path)])
        assert rc == 0
        summary = json.loads((tmp_path / "generalization_summary.json").read_text())
        assert summary["test_stabilized_fraction"] == 1.0
        assert np.isfinite(summary["gap"])


class TestConfigFile:
    def test_config_defaults_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"count": 3, "benchmark": "pendulum"}))
        rc = main(["generate-tasks", "--config", str(cfg), "--seed", "8",
                   "--out", str(tmp_path)])
        assert rc == 0
        tasks, _ = load_tasks(tmp_path / "tasks.json")
        assert len(tasks) == 3 and tasks[0].n_x == 2
        # explicit flag beats the config file
        rc = main(["generate-tasks", "--config", str(cfg), "--count", "2",
                   "--seed", "8", "--out", str(tmp_path)])
        assert rc == 0
        tasks, _ = load_tasks(tmp_path / "tasks.json")
        assert len(tasks) == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["generate-tasks", "--config", str(cfg),
                     "--out", str(tmp_path)]) == 2


class TestSidecars:
    def test_metadata_written(self, task_files, tmp_path):
        assert main(["train", "--tasks", str(task_files / "tasks.json"),
                     "--iterations", "5", "--log-every", "5", "--seed", "3",
                     "--out", str(tmp_path)]) == 0
        meta = json.loads((tmp_path / "train_log.csv.meta.json").read_text())
        assert meta["seed"] == 3
        assert len(meta["config_sha256"]) == 64
