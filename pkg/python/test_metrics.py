"""Tests for efficiency accounting and detection statistics"""

import math
import os
import sys
from fractions import Fraction

import pytest

sys.path.append(os.path.join(os.path.dirname(__file__)))

from adversary import AttackSpec
from errors import ArgumentError
from metrics import (
    SIMULATED_ROW_NAME,
    EfficiencyReport,
    count_transcript,
    detection_stats,
    efficiency,
    results_frame,
    table2_report,
)
from protocol import ProtocolParams, run_protocol


class TestEfficiency:

    def test_exact_fraction(self):
        assert efficiency(64, 256, 256) == Fraction(1, 8)
        assert efficiency(64, 512, 512) == Fraction(1, 16)

    def test_zero_denominator(self):
        with pytest.raises(ArgumentError):
            efficiency(0, 0, 0)

    def test_negative_counts(self):
        with pytest.raises(ArgumentError):
            efficiency(-1, 4, 4)

    def test_report_eta(self):
        assert EfficiencyReport(b_s=10, q_t=40, b_t=40).eta == Fraction(1, 8)

    def test_aborted_run_counts_no_secret_bits(self):
        result = run_protocol(ProtocolParams(n=64, seed=1), AttackSpec.measure_resend_z())
        counts = count_transcript(result)
        assert counts.b_s == 0
        assert (counts.q_t, counts.b_t, counts.physical_q_t) == (320, 320, 640)


    def test_eta_nonincreasing_in_delta(self):
        etas = []
        for delta in (0.0, 0.1, 0.25, 0.5):
            result = next(r for r in (run_protocol(ProtocolParams(n=16, delta=delta, seed=s)) for s in range(40))
                          if r.aborted is None)
            counts = count_transcript(result)
            assert counts.b_s == 16
            etas.append(counts.eta)
        assert etas[0] == Fraction(1, 8)
        assert all(later <= earlier for earlier, later in zip(etas, etas[1:]))


class TestTable2:

    def test_no_completed_run_is_noted(self):
        simulated = table2_report(n=64, delta=0.0, seed=1, max_attempts=1).iloc[-1]
        assert simulated["b_s"] == "0"
        assert simulated["note"].startswith("no completed run in 1 attempt(s)")
        assert "InsufficientSift" in simulated["note"]

    def test_max_attempts_must_be_positive(self):
        with pytest.raises(ArgumentError):
            table2_report(max_attempts=0)

    def test_rows_match_comparison_table(self):
        table = table2_report(n=16, seed=0)
        assert list(table["protocol"]) == ["BKM2007", "ZQLWL2009", SIMULATED_ROW_NAME]
        assert list(table["efficiency"]) == ["1/16", "1/8", "1/8"]
        simulated = table.iloc[-1]
        assert (simulated["q_t"], simulated["b_s"], simulated["b_t"]) == ("64", "16", "64")

    def test_nonzero_delta_is_noted(self):
        table = table2_report(n=16, delta=0.25, seed=0)
        simulated = table.iloc[-1]
        assert simulated["efficiency"] == "1/10"
        assert "delta=0.25" in simulated["note"]


class TestDetectionStats:

    def test_honest_runs(self):
        results = [run_protocol(ProtocolParams(n=16, seed=s)) for s in range(6)]
        summary = detection_stats(results)
        assert summary.runs == 6
        completed = [r for r in results if r.aborted is None]
        if completed:
            assert summary.mean_ctrl_error_rate == 0.0
        assert sum(summary.abort_frequencies.values()) == pytest.approx(1.0)
        assert set(summary.abort_frequencies) == {"InsufficientSift", "CtrlErrorRate", "TestMismatch", "none"}

    def test_measure_resend_aborts_in_ctrl(self):
        results = [run_protocol(ProtocolParams(n=64, seed=s), AttackSpec.measure_resend_z()) for s in range(3)]
        summary = detection_stats(results)
        assert summary.abort_frequencies["CtrlErrorRate"] >= 2 / 3
        assert 0.3 < summary.mean_ctrl_error_rate < 0.7
        assert math.isnan(summary.mean_test_mismatch_rate) or summary.mean_test_mismatch_rate == 0.0

    def test_single_run_has_zero_spread(self):
        summary = detection_stats([run_protocol(ProtocolParams(n=64, seed=1), AttackSpec.measure_resend_z())])
        assert summary.std_ctrl_error_rate == 0.0

    def test_empty(self):
        with pytest.raises(ArgumentError):
            detection_stats([])

    def test_results_frame_columns(self):
        frame = results_frame([run_protocol(ProtocolParams(n=8, seed=s)) for s in range(2)])
        assert list(frame["trial"]) == [0, 1]
        for column in ("aborted", "ctrl_error_rate", "eta", "final_key", "detection_probability"):
            assert column in frame.columns

    def test_summary_as_dict(self):
        summary = detection_stats([run_protocol(ProtocolParams(n=8, seed=0))]).as_dict()
        assert {"runs", "mean_ctrl_error_rate", "std_ctrl_error_rate", "abort_frequencies"} <= set(summary)
