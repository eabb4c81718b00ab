import csv
import json
import subprocess
import sys

import pytest

from rejectgate.cli import main
from rejectgate.cost_core import Dataset
from rejectgate.dataio import load_dataset, save_dataset
from rejectgate.simulate import generate_gaussian_logits

from .test_rejector import two_group_fixture


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestThreshold:
    @pytest.mark.parametrize("k, expected", [("3", "0.5"), ("1", "0"), ("9", "0.8")])
    def test_values(self, capsys, k, expected):
        code, out, _ = run(capsys, "threshold", "--k", k)
        assert code == 0 and out.strip() == expected

    def test_general_costs(self, capsys):
        code, out, _ = run(capsys, "threshold", "--v", "2", "--cd", "0", "--cw", "-6")
        assert code == 0 and float(out) == pytest.approx(0.75)

    @pytest.mark.parametrize("argv", [["--k", "0"], ["--k", "3", "--v", "1"], ["--v", "1", "--cd", "0"]])
    def test_usage_errors(self, capsys, argv):
        code, _, err = run(capsys, "threshold", *argv)
        assert code == 2 and "error" in err


class TestAnalyze:
    def test_auto(self, capsys, d4_csv):
        code, out, _ = run(capsys, "analyze", "--input", str(d4_csv), "--k", "3", "--deterministic")
        data = json.loads(out)
        assert code == 0
        assert data["calibration"]["value_gap"] == pytest.approx(0.2)
        assert data["calibration"]["threshold_divergence"] == pytest.approx(0.2)
        assert data["calibration"]["t_empirical"] == 0.7
        assert data["value_at_threshold"]["mean_value"] == -0.5
        assert data["parameters"]["threshold"] == 0.5

    def test_fit_matches_sweep_maximum(self, capsys, d4_csv):
        _, out, _ = run(capsys, "analyze", "--input", str(d4_csv), "--threshold", "fit")
        fitted = json.loads(out)
        _, out, _ = run(capsys, "sweep", "--input", str(d4_csv))
        best = max(float(r["deployed_mean_value"]) for r in csv.DictReader(out.splitlines()))
        assert fitted["value_at_threshold"]["mean_value"] == best == 0.0

    def test_explicit_threshold(self, capsys, d4_csv):
        _, out, _ = run(capsys, "analyze", "--input", str(d4_csv), "--threshold", "0.7")
        assert json.loads(out)["value_at_threshold"]["mean_value"] == 0.0

    def test_bad_threshold(self, capsys, d4_csv):
        assert run(capsys, "analyze", "--input", str(d4_csv), "--threshold", "1.5")[0] == 2

    def test_groups_section(self, capsys, tmp_path):
        path = tmp_path / "g.csv"
        save_dataset(two_group_fixture(seed=1, n=2000), path)
        _, out, _ = run(capsys, "analyze", "--input", str(path))
        rows = json.loads(out)["groups"]["rows"]
        assert [(r["group"], r["trusted"]) for r in rows] == [("calibrated", True), ("distorted", False)]

    def test_empty_input(self, capsys, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("id,confidence,correct\n")
        code, _, err = run(capsys, "analyze", "--input", str(path))
        assert code == 1 and "empty dataset" in err

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "analyze", "--input", str(tmp_path / "nope.csv"))[0] == 1

    def test_markdown_output(self, capsys, tmp_path, d4_csv):
        out_path = tmp_path / "r.md"
        code, _, _ = run(capsys, "analyze", "--input", str(d4_csv), "--output", str(out_path))
        text = out_path.read_text()
        assert code == 0 and text.startswith("# rejectgate analysis report")
        assert "| calibration.t_empirical | 0.7 |" in text

    def test_deterministic_identical(self, capsys, d4_csv):
        outs = [run(capsys, "analyze", "--input", str(d4_csv), "--deterministic")[1] for _ in range(2)]
        assert outs[0] == outs[1]


class TestSweep:
    def test_d4(self, capsys, d4_csv):
        code, out, _ = run(capsys, "sweep", "--input", str(d4_csv))
        rows = list(csv.DictReader(out.splitlines()))
        assert code == 0 and len(rows) == 6
        assert [r["threshold"] for r in rows][-1] == "REJECT_ALL"

    def test_single_record(self, capsys, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("id,confidence,correct\nx,0.4,true\n")
        _, out, _ = run(capsys, "sweep", "--input", str(path))
        assert len(out.strip().splitlines()) == 1 + 3

    def test_unwritable_output(self, capsys, tmp_path, d4_csv):
        code, _, _ = run(capsys, "sweep", "--input", str(d4_csv), "--output", str(tmp_path / "no" / "c.csv"))
        assert code == 1


class TestCalibrate:
    def test_recovers_factor(self, capsys, tmp_path):
        path = tmp_path / "l.jsonl"
        save_dataset(generate_gaussian_logits(20000, std=2.0, overconfidence=2.0, seed=3), path)
        recal = tmp_path / "recal.csv"
        code, out, _ = run(capsys, "calibrate", "--input", str(path), "--emit-recalibrated", str(recal))
        data = json.loads(out)
        assert code == 0
        assert 1.9 <= data["temperature"]["temperature"] <= 2.1
        assert data["after"]["nll"] <= data["before"]["nll"]
        assert load_dataset(recal).n == 20000

    def test_no_logits(self, capsys, d4_csv):
        code, _, err = run(capsys, "calibrate", "--input", str(d4_csv))
        assert code == 1 and "logits required" in err


class TestReject:
    def test_fit_and_apply(self, capsys, tmp_path, d4_csv):
        spec = tmp_path / "spec.json"
        assert run(capsys, "reject", "fit", "--input", str(d4_csv), "--output", str(spec))[0] == 0
        assert json.loads(spec.read_text())["global_threshold"] == 0.7
        code, out, _ = run(capsys, "reject", "apply", "--spec", str(spec), "--input", str(d4_csv))
        decisions = {r["id"]: r["decision"] for r in csv.DictReader(out.splitlines())}
        assert code == 0
        assert decisions == {"a": "accept", "b": "reject", "c": "accept", "d": "reject"}

    def test_eval_uses_spec_cost(self, capsys, tmp_path, d4_csv):
        spec = tmp_path / "spec.json"
        run(capsys, "reject", "fit", "--input", str(d4_csv), "--k", "9", "--output", str(spec))
        _, out, _ = run(capsys, "reject", "eval", "--spec", str(spec), "--input", str(d4_csv))
        assert json.loads(out)["parameters"]["k"] == 9

    def test_trust(self, capsys, tmp_path):
        path = tmp_path / "g.csv"
        save_dataset(two_group_fixture(seed=2, n=3000), path)
        spec = tmp_path / "trusted.json"
        code, out, _ = run(capsys, "reject", "trust", "--input", str(path), "--emit-spec", str(spec))
        assert code == 0
        assert json.loads(out)["groups"]["trusted_groups"] == ["calibrated"]
        assert json.loads(spec.read_text())["trusted_groups"] == ["calibrated"]

    def test_per_group_requires_groups(self, capsys, d4_csv):
        code, _, err = run(capsys, "reject", "fit-per-group", "--input", str(d4_csv))
        assert code == 1 and "grouping required" in err

    def test_bad_spec_version(self, capsys, tmp_path, d4_csv):
        spec = tmp_path / "spec.json"
        run(capsys, "reject", "fit", "--input", str(d4_csv), "--output", str(spec))
        doc = json.loads(spec.read_text())
        doc["version"] = 7
        spec.write_text(json.dumps(doc))
        code, _, err = run(capsys, "reject", "apply", "--spec", str(spec), "--input", str(d4_csv))
        assert code == 1 and "unsupported spec version" in err


class TestSimulate:
    def test_calibrated_value(self, capsys):
        code, out, _ = run(capsys, "simulate", "--n", "100000", "--k", "3", "--seed", "7")
        sim = json.loads(out)["simulation"]
        assert code == 0
        assert sim["mean_total_value"] / 100000 == pytest.approx(-0.625, abs=0.02)

    def test_rare_slice_advantage(self, capsys):
        _, out, _ = run(capsys, "simulate", "--n", "20000", "--alpha", "2", "--beta", "5", "--hc", "0.1", "--seed", "1")
        data = json.loads(out)
        assert data["simulation"]["mean_advantage"] > 0
        assert data["dataset"]["top_line_accuracy"] < 0.3

    def test_deterministic(self, capsys):
        argv = ["simulate", "--n", "2000", "--seed", "5", "--deterministic"]
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]

    def test_env_seed(self, capsys, monkeypatch):
        explicit = run(capsys, "simulate", "--n", "500", "--seed", "11", "--deterministic")[1]
        monkeypatch.setenv("REJECT_GATE_SEED", "11")
        from_env = run(capsys, "simulate", "--n", "500", "--deterministic")[1]
        assert from_env == explicit
        assert json.loads(from_env)["parameters"]["seed"] == 11

    def test_emit_dataset(self, capsys, tmp_path):
        path = tmp_path / "sim.csv"
        run(capsys, "simulate", "--n", "300", "--gamma", "2", "--emit-dataset", str(path))
        assert path.read_text().startswith("# provenance:")
        d = load_dataset(path)
        assert isinstance(d, Dataset) and d.n == 300 and d.has_logits

    def test_conflicting_cost_flags(self, capsys):
        assert run(capsys, "simulate", "--k", "3", "--v", "1", "--cd", "-1", "--cw", "-3")[0] == 2

    def test_invalid_config(self, capsys):
        assert run(capsys, "simulate", "--n", "0")[0] == 2

    def test_no_resample_matches_deployed(self, capsys):
        _, out, _ = run(capsys, "simulate", "--n", "1000", "--replications", "1", "--no-resample")
        data = json.loads(out)
        assert data["simulation"]["mean_total_value"] == data["dataset"]["deployed_value"]["total_value"]


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rejectgate", "threshold", "--k", "3"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.5"
