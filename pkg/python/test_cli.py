"""Tests for the command-line front end"""

import io
import json
import os
import sys

import pandas as pd
import pytest

sys.path.append(os.path.join(os.path.dirname(__file__)))

from adversary import AttackSpec
from cli import EXIT_CONFIG, EXIT_OK, RunConfig, cmd_run, cmd_scan, derive_trial_seed, main, run_trials
from errors import ConfigError
from protocol import ProtocolParams


def run_config(**kwargs):
    defaults = dict(params=ProtocolParams(n=16, seed=7), attack=AttackSpec.none(), trials=3,
                    output_format="json", deterministic=True)
    defaults.update(kwargs)
    return RunConfig(**defaults)


class TestRunCommand:

    def test_deterministic_output_is_byte_identical(self):
        first, second = io.StringIO(), io.StringIO()
        cmd_run(run_config(), out=first)
        cmd_run(run_config(), out=second)
        assert first.getvalue() == second.getvalue()

    @pytest.mark.parametrize("fmt", ["text", "csv"])
    def test_other_formats_are_deterministic(self, fmt):
        first, second = io.StringIO(), io.StringIO()
        cmd_run(run_config(output_format=fmt), out=first)
        cmd_run(run_config(output_format=fmt), out=second)
        assert first.getvalue() == second.getvalue()

    def test_main_twice_same_stdout(self, capsys):
        argv = ["run", "--n", "16", "--trials", "2", "--seed", "5", "--format", "json", "--deterministic"]
        assert main(argv) == EXIT_OK
        first = capsys.readouterr().out
        assert main(argv) == EXIT_OK
        assert capsys.readouterr().out == first
        payload = json.loads(first)
        assert len(payload["trials"]) == 2
        assert "generated_at" not in payload
        assert payload["config"]["pairs"] == 80

    def test_timestamp_without_deterministic(self, capsys):
        main(["run", "--n", "8", "--format", "json"])
        assert "generated_at" in json.loads(capsys.readouterr().out)

    def test_workers_keep_trial_order(self):
        serial = run_trials(run_config(trials=4))
        parallel = run_trials(run_config(trials=4, workers=3))
        assert [r.params.seed for r in serial] == [r.params.seed for r in parallel]
        assert [r.final_key_alice for r in serial] == [r.final_key_alice for r in parallel]

    def test_trial_seeds_differ(self):
        seeds = {derive_trial_seed(7, t) for t in range(10)}
        assert len(seeds) == 10
        assert derive_trial_seed(7, 3) == derive_trial_seed(7, 3)

    def test_csv_has_one_row_per_trial(self):
        out = io.StringIO()
        cmd_run(run_config(output_format="csv", trials=5), out=out)
        out.seek(0)
        assert len(pd.read_csv(out)) == 5

    def test_seed_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv("SQKD_SEED", "5")
        main(["run", "--n", "8", "--format", "json", "--deterministic"])
        from_env = json.loads(capsys.readouterr().out)
        assert from_env["config"]["seed"] == 5

    def test_attack_runs_report_aborts(self, capsys):
        main(["run", "--n", "64", "--attack", "measure-resend-z", "--trials", "2", "--format", "text",
              "--deterministic"])
        out = capsys.readouterr().out
        assert "AGGREGATE" in out
        assert "aborted" in out


class TestErrors:

    def test_zero_n(self, capsys):
        assert main(["run", "--n", "0"]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "error[argument_error]: n must be an integer >= 1 (got 0)" in err

    def test_bad_attack(self, capsys):
        assert main(["run", "--attack", "teleport"]) == EXIT_CONFIG
        assert "error[config_error]" in capsys.readouterr().err

    def test_bad_environment_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("SQKD_SEED", "abc")
        assert main(["run", "--n", "8"]) == EXIT_CONFIG
        assert "SQKD_SEED" in capsys.readouterr().err

    def test_unknown_format_rejected_by_argparse(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["run", "--format", "xml"])
        assert excinfo.value.code == 2

    def test_run_config_validation(self):
        with pytest.raises(ConfigError):
            run_config(trials=0)
        with pytest.raises(ConfigError):
            run_config(workers=0)
        with pytest.raises(ConfigError):
            run_config(output_format="yaml")


class TestScanAndTable:

    def test_scan_writes_csv(self, tmp_path):
        target = tmp_path / "csv" / "scan.csv"
        out = io.StringIO()
        assert cmd_scan(3, n=16, seed=1, output=str(target), out=out) == EXIT_OK
        frame = pd.read_csv(target)
        assert len(frame) == 3
        assert frame.loc[0, "family"] == "identity"
        assert "Scan saved" in out.getvalue()

    def test_scan_json_with_plot(self, tmp_path, capsys):
        plot = tmp_path / "scan.png"
        code = main(["scan", "--samples", "2", "--n", "16", "--format", "json", "--deterministic",
                     "--plot", str(plot), "--mrz-fractions", "0.5"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        payload = json.loads(out[: out.rindex("}") + 1])
        assert len(payload["points"]) == 3
        assert payload["robustness_violations"] == 0
        assert plot.exists()

    def test_scan_rejects_zero_samples(self, capsys):
        assert main(["scan", "--samples", "0"]) == EXIT_CONFIG
        assert "error[validation_error]" in capsys.readouterr().err

    def test_table2_text(self, capsys):
        assert main(["table2", "--n", "16"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "eta=1/16" in out
        assert out.count("eta=1/8") == 2

    def test_table2_json(self, capsys):
        main(["table2", "--n", "16", "--format", "json", "--deterministic"])
        rows = json.loads(capsys.readouterr().out)["rows"]
        assert [r["efficiency"] for r in rows] == ["1/16", "1/8", "1/8"]
