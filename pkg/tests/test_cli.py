import json
import math
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uos import __version__
from uos.cli import main
from uos.io import (RunConfig, fmt_number, load_schema, read_csv, read_heatmap, write_heatmap,
                    write_json)

SMALL_PHASE = ["--n", "40", "--kappa", "0.05,0.2", "--rho", "0.6,0.9", "--trials", "8"]


def _validate(path, schema):
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, load_schema(schema))
    return doc


class TestSolve:
    def test_example(self, tmp_path):
        code = main(["solve", "--n", "40", "--m", "36", "--k", "2", "--snr", "noiseless",
                     "--init", "genie:0.5", "--seed", "7", "--out", str(tmp_path)])
        assert code == 0
        doc = _validate(tmp_path / "solve_report.json", "solve_report")
        assert doc["cost_trace"][-1] == pytest.approx(0.0, abs=1e-20)
        assert doc["certification"]["certified"]
        assert len(doc["s_hat"]) == 36 and min(doc["s_hat"]) >= 1

    def test_k_exceeds_m(self, tmp_path, capsys):
        assert main(["solve", "--n", "20", "--k", "10", "--m", "5", "--out", str(tmp_path)]) == 1
        assert "k must not exceed m" in capsys.readouterr().err

    def test_missing_flag(self, tmp_path):
        assert main(["solve", "--n", "20", "--m", "10", "--out", str(tmp_path)]) == 1

    def test_unknown_flag(self, tmp_path):
        assert main(["solve", "--n", "20", "--m", "10", "--k", "2", "--bogus"]) == 1

    def test_uncertified_exits_two(self, tmp_path):
        # heavy deletions, a single random start and a tight eta
        code = main(["solve", "--n", "200", "--m", "110", "--k", "60", "--snr", "20",
                     "--restarts", "1", "--eta", "1", "--seed", "0", "--out", str(tmp_path)])
        assert code == 2
        doc = _validate(tmp_path / "solve_report.json", "solve_report")
        assert doc["certification"]["certified"] is False

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        args = ["solve", "--n", "30", "--m", "25", "--k", "2", "--snr", "20"]
        monkeypatch.setenv("UOS_SEED", "5")
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--seed", "5", "--out", str(tmp_path / "b")])
        a = json.loads((tmp_path / "a" / "solve_report.json").read_text())
        b = json.loads((tmp_path / "b" / "solve_report.json").read_text())
        assert a["seed"] == 5 and a["y_true"] == b["y_true"]

    def test_bad_env_seed(self, monkeypatch):
        monkeypatch.setenv("UOS_SEED", "abc")
        assert main(["solve", "--n", "30", "--m", "25", "--k", "2"]) == 1


class TestPhase:
    def test_smoke_and_determinism(self, tmp_path):
        for sub in ("a", "b"):
            assert main(["phase", *SMALL_PHASE, "--seed", "3", "--out", str(tmp_path / sub)]) == 0
        a = (tmp_path / "a" / "phase.csv").read_bytes()
        assert a == (tmp_path / "b" / "phase.csv").read_bytes()
        rho, kappa, rates = read_heatmap(tmp_path / "a" / "phase.csv")
        assert rates.shape == (2, 2) and not np.isnan(rates).any()
        assert a.decode().splitlines()[0] == "rho\\kappa,0.050000000000000003,0.20000000000000001"
        _validate(tmp_path / "a" / "manifest.json", "manifest")

    def test_workers_do_not_change_output(self, tmp_path):
        main(["phase", *SMALL_PHASE, "--out", str(tmp_path / "a")])
        main(["phase", *SMALL_PHASE, "--workers", "2", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "phase.csv").read_bytes() == (tmp_path / "b" / "phase.csv").read_bytes()

    def test_genie_not_worse_than_random(self, tmp_path):
        grid = ["--n", "100", "--kappa", "0.05,0.2", "--rho", "0.6,0.9", "--trials", "40",
                "--seed", "1"]
        main(["phase", *grid, "--init", "random", "--out", str(tmp_path / "r")])
        main(["phase", *grid, "--init", "genie:0.2", "--out", str(tmp_path / "g")])
        _, _, rnd = read_heatmap(tmp_path / "r" / "phase.csv")
        _, _, gen = read_heatmap(tmp_path / "g" / "phase.csv")
        assert np.all(gen >= rnd - 0.05)

    def test_skipped_recorded(self, tmp_path):
        main(["phase", "--n", "20", "--kappa", "0.1,0.6", "--rho", "0.5", "--trials", "2",
              "--out", str(tmp_path)])
        doc = _validate(tmp_path / "manifest.json", "manifest")
        assert doc["skipped_cells"] == [[0.5, 0.6]]
        _, _, rates = read_heatmap(tmp_path / "phase.csv")
        assert math.isnan(rates[0, 1])

    @pytest.mark.parametrize("bad", [["--trials", "0"], ["--kappa", "x"], ["--init", "warm"],
                                     ["--workers", "0"]])
    def test_usage_errors(self, tmp_path, bad):
        assert main(["phase", *SMALL_PHASE, *bad, "--out", str(tmp_path)]) == 1


class TestSysid:
    def test_smoke(self, tmp_path):
        assert main(["sysid", "--n", "40", "--kappa", "0.05,0.2", "--rho", "0.6,1.0",
                     "--trials", "4", "--out", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "comparison.csv")
        assert header == ["rho", "kappa", "sysid_rate", "gaussian_rate", "difference"]
        assert len(rows) == 4
        for name in ("sysid.csv", "gaussian.csv"):
            assert read_heatmap(tmp_path / name)[2].shape == (2, 2)
        _validate(tmp_path / "manifest.json", "manifest")

    def test_unit_impulse_full_sampling(self, tmp_path):
        # tau = 1: B is b0 times the identity; every output kept
        assert main(["sysid", "--n", "10", "--kappa", "0.5", "--rho", "0.5", "--trials", "5",
                     "--snr", "noiseless", "--tau", "1", "--out", str(tmp_path)]) == 0
        _, _, rates = read_heatmap(tmp_path / "sysid.csv")
        assert rates[0, 0] == 1.0

    def test_bad_tau(self, tmp_path):
        assert main(["sysid", "--tau", "zero", "--out", str(tmp_path)]) == 1


class TestRip:
    def test_example(self, tmp_path):
        assert main(["rip", "--mode", "H", "--n", "100", "--m", "100", "--k", "5",
                     "--trials", "1000", "--out", str(tmp_path)]) == 0
        doc = _validate(tmp_path / "rip_report.json", "rip_report")
        assert doc["report"]["epsilon_hat"] > 0
        header, rows = read_csv(tmp_path / "rip_trials.csv")
        assert header[:2] == ["trial", "ratio"] and len(rows) == 1000

    def test_rrip(self, tmp_path):
        assert main(["rip", "--mode", "HH", "--n", "60", "--m", "40", "--trials", "50",
                     "--mu", "0.5", "--out", str(tmp_path)]) == 0
        assert _validate(tmp_path / "rip_report.json", "rip_report")["report"]["delta_hat"] > 0

    def test_zero_trials(self, tmp_path):
        assert main(["rip", "--trials", "0", "--out", str(tmp_path)]) == 1

    def test_starvation(self, tmp_path):
        assert main(["rip", "--mode", "HH", "--n", "10", "--m", "5", "--k", "2", "--mu", "0.001",
                     "--trials", "20", "--perturbation", "1e-7", "--hold-selection",
                     "--out", str(tmp_path)]) == 2


class TestAnalysis:
    def test_fig_pair(self, tmp_path):
        assert main(["analysis", "--varsigma", "1.03", "--varrho", "0.06",
                     "--out", str(tmp_path)]) == 0
        doc = _validate(tmp_path / "fixedpoints.json", "fixedpoints")
        assert doc["two_fixed_points"] and doc["nu_min"] < doc["nu_max"]
        assert doc["evolution"]["limit"] >= doc["nu_max"] - 1e-6
        header, rows = read_csv(tmp_path / "envelope.csv")
        assert header == ["nu", "F0"] and len(rows) == 1001
        assert read_csv(tmp_path / "upsilon.csv")[0] == ["alpha", "upsilon"]
        assert read_csv(tmp_path / "evolution.csv")[0] == ["t", "nu"]

    def test_condition_violated(self, tmp_path, capsys):
        assert main(["analysis", "--varsigma", "1.1", "--varrho", "1.2",
                     "--out", str(tmp_path)]) == 2
        assert "Condition 1" in capsys.readouterr().err

    def test_noiseless_delta(self, tmp_path):
        assert main(["analysis", "--delta", "0.2", "--out", str(tmp_path)]) == 0
        doc = _validate(tmp_path / "fixedpoints.json", "fixedpoints")
        assert doc["nu_max"] == 1.0 and doc["regime"] == "noiseless"

    def test_out_of_regime(self, tmp_path):
        # delta = 0.5 gives varsigma = sqrt(3) > sqrt(2)
        assert main(["analysis", "--delta", "0.5", "--out", str(tmp_path)]) == 2

    def test_needs_parameters(self, tmp_path):
        assert main(["analysis", "--out", str(tmp_path)]) == 1
        assert main(["analysis", "--varsigma", "1.1", "--out", str(tmp_path)]) == 1


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg = RunConfig("phase", {"n": 40, "kappa": [0.1], "rho": [0.8], "trials": 3}, seed=4,
                        output_dir=str(tmp_path / "from_config"))
        path = tmp_path / "cfg.json"
        path.write_text(cfg.to_json())
        assert main(["phase", "--config", str(path), "--trials", "2",
                     "--out", str(tmp_path / "flag")]) == 0
        doc = json.loads((tmp_path / "flag" / "manifest.json").read_text())
        assert doc["config"]["params"]["trials"] == 2
        assert doc["config"]["params"]["n"] == 40
        assert doc["config"]["params"]["threshold_factor"] == 10.0
        assert doc["seed"] == 4
        assert not (tmp_path / "from_config").exists()

    def test_config_command_mismatch(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(RunConfig("rip", {}, 0).to_json())
        assert main(["phase", "--config", str(path)]) == 1

    def test_config_unknown_key(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(RunConfig("phase", {"colour": 1}, 0).to_json())
        assert main(["phase", "--config", str(path)]) == 1

    def test_unreadable(self, tmp_path):
        assert main(["phase", "--config", str(tmp_path / "missing.json")]) == 1

    def test_schema(self):
        jsonschema.validate(RunConfig("solve", {"n": 3}, 1).to_dict(), load_schema("run_config"))

    @settings(max_examples=60)
    @given(st.sampled_from(["solve", "phase", "sysid", "rip", "analysis"]),
           st.dictionaries(st.text(min_size=1, max_size=8),
                           st.one_of(st.integers(-10**6, 10**6),
                                     st.floats(allow_nan=False, allow_infinity=False),
                                     st.text(max_size=8), st.booleans(), st.none(),
                                     st.lists(st.floats(allow_nan=False, allow_infinity=False),
                                              max_size=4)),
                           max_size=5),
           st.integers(0, 2**63 - 1), st.integers(1, 64))
    def test_round_trip(self, command, params, seed, workers):
        cfg = RunConfig(command, params, seed, "out", workers)
        assert RunConfig.from_json(cfg.to_json()) == cfg
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    def test_rejects_unknown_fields(self):
        with pytest.raises(ValueError):
            RunConfig.from_dict({"command": "solve", "params": {}, "seed": 0, "colour": 1})


class TestSerialization:
    def test_number_format(self):
        assert fmt_number(0.1) == "0.10000000000000001"
        assert float(fmt_number(1 / 3)) == 1 / 3
        assert fmt_number(float("nan")) == "nan"
        assert fmt_number(7) == "7"

    def test_heatmap_round_trip(self, tmp_path):
        rates = np.array([[0.5, np.nan], [1.0, 0.25]])
        write_heatmap(tmp_path / "h.csv", [0.3, 0.6], [0.1, 0.2], rates)
        rho, kappa, back = read_heatmap(tmp_path / "h.csv")
        assert list(rho) == [0.3, 0.6] and list(kappa) == [0.1, 0.2]
        assert np.array_equal(back, rates, equal_nan=True)

    def test_json_non_finite(self, tmp_path):
        write_json(tmp_path / "x.json", {"a": math.inf, "b": np.float64(2.5), "c": np.arange(2)})
        assert json.loads((tmp_path / "x.json").read_text()) == {"a": None, "b": 2.5, "c": [0, 1]}


class TestEntryPoints:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.startswith(__version__)

    def test_no_command(self):
        assert main([]) == 1

    def test_module_invocation(self):
        out = subprocess.run([sys.executable, "-m", "uos", "version"], capture_output=True,
                             text=True, check=True)
        assert out.stdout.startswith(__version__)
