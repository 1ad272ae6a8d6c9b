import json

import numpy as np
import pytest

from nts.cli import ConfigError, parse_config, run_command


def write_config(path, **overrides):
    cfg = {
        "channel": {"rows": [[0.9, 0.1], [0.1, 0.9]], "name": "bsc"},
        "q0": [0.5, 0.5],
        "params": {
            "rate": 0.45,
            "delta": 0.1,
            "rho": -0.5,
            "n": 6,
            "blocks": 40,
            "seed": 7,
            "rate_grid": {"start": 0.0, "stop": 0.7, "step": 0.01},
        },
    }
    for key, value in overrides.items():
        if value is None:
            cfg["params"].pop(key, None)
        elif key in ("channel", "q0", "params"):
            cfg[key] = value
        else:
            cfg["params"][key] = value
    path.write_text(json.dumps(cfg))
    return str(path)


class TestParseConfig:
    def test_valid_bsc(self, tmp_path):
        path = write_config(tmp_path / "c.json")
        cfg, channel, q0, params = parse_config(path)
        assert cfg.input_alphabet_size == 2
        assert np.allclose(channel.matrix, [[0.9, 0.1], [0.1, 0.9]])
        assert params["rate"] == 0.45

    def test_bad_row_sum(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"channel": {"rows": [[0.9, 0.09], [0.1, 0.9]]}, "q0": [0.5, 0.5]}))
        with pytest.raises(ConfigError):
            parse_config(str(path))

    def test_unknown_param_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(
            json.dumps({"channel": {"rows": [[1.0, 0.0], [0.0, 1.0]]}, "q0": [0.5, 0.5], "params": {"bogus": 1}})
        )
        with pytest.raises(ConfigError) as exc:
            parse_config(str(path))
        assert "bogus" in str(exc.value)

    def test_q0_length_mismatch(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"channel": {"rows": [[1.0, 0.0], [0.0, 1.0]]}, "q0": [1.0]}))
        with pytest.raises(ConfigError):
            parse_config(str(path))


class TestExitCodes:
    def test_success(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", rate_grid={"start": 0.0, "stop": 0.2, "step": 0.1})
        assert run_command(["curves", "--config", cfg, "--out-dir", str(tmp_path / "out")]) == 0

    def test_unknown_subcommand_is_usage(self, tmp_path, capsys):
        assert run_command(["bogus"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_subcommand_is_usage(self):
        assert run_command([]) == 1

    def test_missing_file_is_io(self, tmp_path):
        assert run_command(["curves", "--config", str(tmp_path / "nope.json")]) == 2

    def test_bad_row_is_config(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"channel": {"rows": [[0.9, 0.09], [0.1, 0.9]]}, "q0": [0.5, 0.5]}))
        assert run_command(["curves", "--config", str(path)]) == 3

    def test_missing_rate_grid_names_field(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", rate_grid=None)
        assert run_command(["curves", "--config", cfg, "--out-dir", str(tmp_path)]) == 3
        assert "rate_grid" in capsys.readouterr().err

    def test_numeric_failure_is_4(self, tmp_path):
        # exact with a codebook size beyond 2^30 trips the resource guard
        cfg = write_config(tmp_path / "c.json", n=10, rate=5.0)
        assert run_command(["exact", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 4


class TestCurves:
    def test_zero_crossings_bracket_mutual_information(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out = tmp_path / "out"
        assert run_command(["curves", "--config", cfg, "--out-dir", str(out)]) == 0
        lines = (out / "curves.csv").read_text().splitlines()
        header = lines[0].split(",")
        rows = [line.split(",") for line in lines[1:]]
        i_rate = header.index("rate")
        i_err = header.index("error_exponent")
        i_corr = header.index("correct_ml")
        i_qp = 0.368064  # ln 2 - H_b(0.1)
        err_pos = [float(r[i_rate]) for r in rows if float(r[i_err]) > 0]
        corr_pos = [float(r[i_rate]) for r in rows if float(r[i_corr]) > 0]
        # error exponent positive strictly below I, zero at/above
        assert max(err_pos) < i_qp < max(err_pos) + 0.011
        # correct exponent positive strictly above I
        assert min(corr_pos) > i_qp > min(corr_pos) - 0.011

    def test_na_above_r_plus(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json", rate_grid={"start": 0.6, "stop": 0.8, "step": 0.05}
        )
        out = tmp_path / "out"
        assert run_command(["curves", "--config", cfg, "--out-dir", str(out)]) == 0
        lines = (out / "curves.csv").read_text().splitlines()
        idx = lines[0].split(",").index("correct_strict")
        cells = [line.split(",")[idx] for line in lines[1:]]
        # r_plus = ln 2 ~ 0.693 for uniform Q on the BSC
        assert "NA" in cells
        assert any(c != "NA" for c in cells)

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", rate_grid={"start": 0.0, "stop": 0.3, "step": 0.05})
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_command(["curves", "--config", cfg, "--out-dir", str(a)]) == 0
        assert run_command(["curves", "--config", cfg, "--out-dir", str(b)]) == 0
        assert (a / "curves.csv").read_bytes() == (b / "curves.csv").read_bytes()

    def test_threaded_sweep_identical(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path / "c.json", rate_grid={"start": 0.0, "stop": 0.3, "step": 0.05})
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_command(["curves", "--config", cfg, "--out-dir", str(a)]) == 0
        monkeypatch.setenv("NTS_THREADS", "4")
        assert run_command(["curves", "--config", cfg, "--out-dir", str(b)]) == 0
        assert (a / "curves.csv").read_bytes() == (b / "curves.csv").read_bytes()

    def test_manifest_written(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", rate_grid={"start": 0.0, "stop": 0.1, "step": 0.05})
        out = tmp_path / "out"
        run_command(["curves", "--config", cfg, "--out-dir", str(out)])
        manifest = json.loads((out / "curves_manifest.json").read_text())
        assert manifest["command"] == "curves"
        assert manifest["outputs"] == [str(out / "curves.csv")]
        assert "timestamp" in manifest and "version" in manifest


class TestOtherCommands:
    def test_iterate_rate_outputs(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", rate=0.3)
        out = tmp_path / "out"
        assert run_command(["iterate-rate", "--config", cfg, "--out-dir", str(out)]) == 0
        summary = json.loads((out / "iterate_rate_summary.json").read_text())
        assert summary["check_lower_than"]["holds"] is True
        assert summary["final_exponent"] < 1e-6
        lines = (out / "iterate_rate.csv").read_text().splitlines()
        assert lines[0] == "l,exponent,kl_next_prev,rho_hat,q0,q1"

    def test_iterate_slope_outputs(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out = tmp_path / "out"
        assert run_command(["iterate-slope", "--config", cfg, "--out-dir", str(out)]) == 0
        summary = json.loads((out / "iterate_slope_summary.json").read_text())
        assert summary["stationarity_residual"] < 1e-6

    def test_exact_output(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", n=4, rate=float(np.log(3) / 4))
        out = tmp_path / "out"
        assert run_command(["exact", "--config", cfg, "--out-dir", str(out)]) == 0
        report = json.loads((out / "exact.json").read_text())
        assert report["m"] == 3
        assert report["p_error"] + report["p_correct_strict"] == pytest.approx(1.0, abs=1e-12)
        total = sum(r["probability"] for r in report["per_type_breakdown"])
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_simulate_output(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", n=8, rate=0.2, blocks=25)
        out = tmp_path / "out"
        assert run_command(["simulate", "--config", cfg, "--out-dir", str(out)]) == 0
        lines = (out / "simulate.csv").read_text().splitlines()
        assert len(lines) == 26
        summary = json.loads((out / "simulate_summary.json").read_text())
        assert summary["blocks"] == 25
        assert 0 <= summary["feedback_rate"] <= 1

    def test_oracle_output(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", rate=0.45)
        out = tmp_path / "out"
        assert run_command(["oracle", "--config", cfg, "--out-dir", str(out)]) == 0
        lines = (out / "oracle_compare.csv").read_text().splitlines()
        assert lines[0] == "kind,rate,explicit,implicit,abs_diff"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 3
        for row in rows:
            if row[4] != "NA":
                assert float(row[4]) < 0.06
        assert (out / "cc_bound.csv").exists()
