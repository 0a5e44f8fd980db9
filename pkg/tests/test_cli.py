"""CLI exit codes, determinism, and the end-to-end pipeline smoke run."""
import json
import subprocess
import sys

import pytest

from mhdp_active.cli import main


def run_cli(args):
    return main(args)


class TestExitCodes:
    def test_unknown_flag_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "mhdp_active.cli", "generate", "--bogus"],
            capture_output=True, text=True)
        assert proc.returncode == 2
        assert "usage" in proc.stderr.lower()

    def test_unknown_subcommand_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "mhdp_active.cli", "frobnicate"],
            capture_output=True, text=True)
        assert proc.returncode == 2

    def test_validation_error_exits_1(self, tmp_path):
        rc = run_cli(["generate", "--pure", "2", "--mixed", "4", "--seed", "1",
                      "--out", str(tmp_path / "x.json")])
        assert rc == 1

    def test_missing_file_exits_1(self, tmp_path):
        rc = run_cli(["train", "--data", str(tmp_path / "nope.json"),
                      "--seed", "1", "--out", str(tmp_path / "m.json")])
        assert rc == 1


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data.json"
    model = root / "model.json"
    args = ["generate", "--pure", "3", "--mixed", "1", "--per-class", "2",
            "--modalities", "4", "--tokens", "8", "--dim", "5",
            "--seed", "21", "--out", str(data)]
    assert run_cli(args) == 0
    assert run_cli(["train", "--data", str(data), "--sweeps", "40",
                    "--seed", "22", "--out", str(model)]) == 0
    return root, data, model


class TestPipeline:
    def test_generate_deterministic(self, pipeline, tmp_path):
        root, data, _ = pipeline
        out2 = tmp_path / "data2.json"
        run_cli(["generate", "--pure", "3", "--mixed", "1", "--per-class", "2",
                 "--modalities", "4", "--tokens", "8", "--dim", "5",
                 "--seed", "21", "--out", str(out2)])
        assert data.read_bytes() == out2.read_bytes()

    def test_train_deterministic(self, pipeline, tmp_path):
        root, data, model = pipeline
        out2 = tmp_path / "model2.json"
        run_cli(["train", "--data", str(data), "--sweeps", "40",
                 "--seed", "22", "--out", str(out2)])
        assert model.read_bytes() == out2.read_bytes()

    def test_model_metadata_block(self, pipeline):
        _, _, model = pipeline
        doc = json.loads(model.read_text())
        meta = doc["meta"]
        assert meta["tool"] == "mhdp-active"
        assert meta["command"] == "train"
        assert meta["seed"] == 22
        assert "config_hash" in meta

    def test_recognize_stdout(self, pipeline, capsys):
        _, data, model = pipeline
        rc = run_cli(["recognize", "--model", str(model), "--object", str(data),
                      "--modalities", "1,2", "--seed", "5"])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert abs(sum(doc["category_posterior"]) - 1.0) < 1e-9

    def test_plan_deterministic(self, pipeline, tmp_path):
        _, data, model = pipeline
        p1, p2 = tmp_path / "p1.json", tmp_path / "p2.json"
        base = ["plan", "--model", str(model), "--object", str(data),
                "--observed", "1", "--budget", "2", "--policy", "greedy",
                "--mc", "16", "--seed", "9"]
        assert run_cli(base + ["--out", str(p1)]) == 0
        assert run_cli(base + ["--out", str(p2)]) == 0
        assert p1.read_bytes() == p2.read_bytes()
        doc = json.loads(p1.read_text())
        assert doc["stats"]["ig_evaluations"] == 3 + 2
        assert len(doc["steps"]) == 2

    def test_plan_budget_too_big_exits_1(self, pipeline, tmp_path):
        _, data, model = pipeline
        rc = run_cli(["plan", "--model", str(model), "--object", str(data),
                      "--observed", "1", "--budget", "9", "--mc", "8",
                      "--seed", "9", "--out", str(tmp_path / "p.json")])
        assert rc == 1

    def test_experiment_and_report_roundtrip(self, pipeline, tmp_path):
        _, data, model = pipeline
        out1 = tmp_path / "exp1"
        out2 = tmp_path / "exp2"
        base = ["experiment", "--data", str(data), "--model", str(model),
                "--policies", "greedy,random", "--budget", "3", "--mc", "12",
                "--seeds", "2", "--seed", "31"]
        assert run_cli(base + ["--jobs", "1", "--out", str(out1)]) == 0
        assert run_cli(base + ["--jobs", "2", "--out", str(out2)]) == 0
        for name in ("detail.csv", "summary.csv", "stats.csv", "report.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
        # re-emission from the saved JSON reproduces the CSVs
        re_out = tmp_path / "re"
        assert run_cli(["report", "--in", str(out1 / "report.json"),
                        "--out", str(re_out)]) == 0
        assert (re_out / "detail.csv").read_bytes() == \
            (out1 / "detail.csv").read_bytes()

    def test_sweep_deterministic(self, pipeline, tmp_path):
        _, data, model = pipeline
        s1, s2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
        base = ["sweep", "--model", str(model), "--object", str(data),
                "--modality", "3", "--counts", "10,20", "--reps", "3",
                "--seed", "12"]
        assert run_cli(base + ["--out", str(s1)]) == 0
        assert run_cli(base + ["--out", str(s2)]) == 0
        assert s1.read_bytes() == s2.read_bytes()

    def test_config_file_merge(self, pipeline, tmp_path):
        _, data, _ = pipeline
        conf = tmp_path / "conf.json"
        conf.write_text('{"sweeps": 40}')
        m1 = tmp_path / "m1.json"
        assert run_cli(["train", "--data", str(data), "--config", str(conf),
                        "--seed", "22", "--out", str(m1)]) == 0
        doc = json.loads(m1.read_text())
        assert doc["config"]["train_sweeps"] == 40
