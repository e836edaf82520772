import csv
import json

import pytest

from qlmpc.cli import main

TINY_INLINE = {
    "scenario": {
        "model": "tiny-qlpv",
        "x0": [0.4],
        "steps": 5,
        "horizon": 2,
        "q": 1.0,
        "r": 1.0,
        "p": 1.0,
        "name": "toy",
    },
    "repeat": 2,
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["simulate", "--config", str(path)]) == 2

    def test_unknown_scenario(self, tmp_path):
        assert main(["simulate", "--scenario", "rocket", "--out", str(tmp_path)]) == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": "tiny-lti", "color": "red"})
        assert main(["simulate", "--config", cfg]) == 2

    def test_invalid_weights(self, tmp_path):
        payload = json.loads(json.dumps(TINY_INLINE))
        payload["scenario"]["r"] = 0.0
        cfg = write_config(tmp_path, payload)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

    def test_bad_flag_value(self):
        assert main(["simulate", "--variant", "quick"]) == 2

    def test_numerical_failure_is_exit_3(self, tmp_path):
        payload = json.loads(json.dumps(TINY_INLINE))
        payload["scenario"]["x0"] = [1e200]
        cfg = write_config(tmp_path, payload)
        out = tmp_path / "res"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 3
        summary = json.loads((out / "toy_standard_summary.json").read_text())
        assert summary["failed"] is True
        assert summary["failure_step"] == 0

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QLMPC_SEED", "many")
        cfg = write_config(tmp_path, TINY_INLINE)
        assert main(["diagnose", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sim")
    cfg = write_config(tmp, TINY_INLINE)
    code = main(["simulate", "--config", cfg, "--out", str(tmp / "res")])
    assert code == 0
    csv_path = tmp / "res" / "toy_standard_trajectory.csv"
    json_path = tmp / "res" / "toy_standard_summary.json"
    return csv_path, json_path


class TestSimulateOutputs:
    def test_csv_schema(self, outputs):
        csv_path, _ = outputs
        with open(csv_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "x_1", "u_1", "dr", "rcso",
                           "iterations", "solve_time_s", "prep_time_s"]
        assert len(rows) == 1 + 5
        assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3", "4"]

    def test_csv_roundtrips_doubles(self, outputs):
        csv_path, _ = outputs
        with open(csv_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            for key in ("x_1", "u_1", "dr", "solve_time_s", "prep_time_s"):
                val = float(row[key])
                assert repr(val) == row[key]

    def test_csv_is_lf_utf8(self, outputs):
        csv_path, _ = outputs
        raw = csv_path.read_bytes()
        assert b"\r" not in raw

    def test_summary_fields(self, outputs):
        _, json_path = outputs
        summary = json.loads(json_path.read_text(encoding="utf-8"))
        for key in ("scenario", "variant", "mode", "final_rcso", "final_dr",
                    "terminal_state", "solve_time_s", "prep_time_s", "qp_time_s",
                    "steps_completed", "repeat", "failed"):
            assert key in summary
        assert summary["scenario"] == "toy"
        assert summary["steps_completed"] == 5
        assert summary["repeat"] == 2
        assert isinstance(summary["final_rcso"], float)
        assert set(summary["solve_time_s"]) == {"median", "min", "max"}


def test_unicycle_csv_has_one_row_per_step(tmp_path):
    out = tmp_path / "res"
    code = main(["simulate", "--scenario", "unicycle", "--variant", "standard",
                 "--repeat", "1", "--out", str(out)])
    assert code == 0
    lines = (out / "unicycle_standard_trajectory.csv").read_text().splitlines()
    assert len(lines) == 1 + 100  # header + one row per applied step
    summary = json.loads((out / "unicycle_standard_summary.json").read_text())
    assert len(summary["terminal_state"]) == 5


class TestDiagnose:
    def test_tiny_lti_degeneration(self, tmp_path):
        out = tmp_path / "diag"
        assert main(["diagnose", "--scenario", "tiny-lti", "--out", str(out)]) == 0
        payload = json.loads((out / "tiny-lti_diagnostics.json").read_text())
        assert payload["kappa_hat"] == 0.0
        assert payload["e_norm_inf"] == 0.0
        assert payload["identity_error_inf"] <= 1e-10
        assert payload["radius_bound"] is None  # infinite, json-safe
        assert payload["sqp_equivalence_max_dev"] <= 1e-9

    def test_tiny_qlpv_values(self, tmp_path):
        out = tmp_path / "diag"
        assert main(["diagnose", "--scenario", "tiny-qlpv", "--out", str(out)]) == 0
        payload = json.loads((out / "tiny-qlpv_diagnostics.json").read_text())
        assert payload["e_norm_inf"] == pytest.approx(0.125, abs=1e-10)
        assert payload["identity_error_inf"] <= 1e-8
        assert payload["kappa_hat"] < 1.0

    def test_unicycle_report_values(self, tmp_path):
        out = tmp_path / "diag"
        assert main(["diagnose", "--scenario", "unicycle", "--out", str(out)]) == 0
        payload = json.loads((out / "unicycle_diagnostics.json").read_text())
        assert payload["identity_error_inf"] <= 1e-8
        assert payload["e_norm_inf"] > 0.0
        assert payload["fixpoint_tol"] == 1e-10
        assert payload["kappa_hat"] < 1.0
        assert payload["sqp_equivalence_max_dev"] <= 1e-9

    def test_seed_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QLMPC_SEED", "7")
        out = tmp_path / "diag"
        assert main(["diagnose", "--scenario", "tiny-lti", "--out", str(out)]) == 0
        payload = json.loads((out / "tiny-lti_diagnostics.json").read_text())
        assert payload["seed"] == 7


class TestFlagPrecedence:
    def test_flags_override_config(self, tmp_path):
        cfg = write_config(tmp_path, {"scenario": "tiny-lti", "variant": "standard", "repeat": 1})
        out = tmp_path / "res"
        assert main(["simulate", "--config", cfg, "--variant", "exact",
                     "--out", str(out)]) == 0
        summary = json.loads((out / "tiny-lti_exact_summary.json").read_text())
        assert summary["variant"] == "exact"

    def test_mode_alias_rti(self, tmp_path):
        out = tmp_path / "res"
        assert main(["simulate", "--scenario", "tiny-lti", "--mode", "rti",
                     "--repeat", "1", "--out", str(out)]) == 0
        summary = json.loads((out / "tiny-lti_standard_summary.json").read_text())
        assert summary["mode"] == "real_time_single_iteration"
        assert summary["iterations_total"] == 5


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_missing_subcommand_is_usage_error():
    assert main([]) == 2
