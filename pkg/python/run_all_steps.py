"""Reproduction pipeline: runs every experiment, writes csv/ and images/, tracks coverage"""

import math
import os
import sys
import time

import coverage
import numpy as np
import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

CSV_DIR = "csv"
IMAGES_DIR = "images"
ATTACK_CTRL_ROUNDS = 4000
FAKE_QUBITS = ((1.0, 0.0), (1 / math.sqrt(2), 1 / math.sqrt(2)), (0.6, 0.8))


def step_honest_runs(trials=100, n=64, seed=0):
    """Seeded honest runs: aborts, check rates and final-key agreement"""
    from cli import RunConfig, run_trials
    from metrics import results_frame
    from protocol import ProtocolParams

    results = run_trials(RunConfig(ProtocolParams(n=n, seed=seed), _attack("none"), trials=trials))
    frame = results_frame(results)
    frame.to_csv(f"{CSV_DIR}/honest_runs.csv", index=False)
    completed = frame[frame["aborted"].isna()]
    print(f"Completed runs: {len(completed)}/{trials}")
    print(f"Final keys identical in every completed run: {bool(completed['final_keys_match'].all())}")
    return frame


def step_table1_law():
    """The four (encoding, H) combinations and the travel bit they imply"""
    from protocol import BobChoice, RoundRecord, extract_raw_key

    rows = []
    for encoding in (0, 1):
        for h in (0, 1):
            t = h ^ encoding
            record = RoundRecord(0, encoding, BobChoice.SIFT, bob_measured_bit=t, alice_h_bit=h)
            alice, bob = extract_raw_key([record])
            rows.append({"encoding": encoding, "h_bit": h, "t_bit": t, "key_alice": alice[0], "key_bob": bob[0]})
    frame = pd.DataFrame(rows)
    frame.to_csv(f"{CSV_DIR}/table1_law.csv", index=False)
    print(frame.to_string(index=False))
    return frame


def step_reduced_states():
    """Largest entrywise deviation of each one-qubit marginal of a Bell state from I/2"""
    from qsim import BELL_ORDER, prepare_bell, reduced_state

    rows = []
    for bell in BELL_ORDER:
        for keep in (0, 1):
            rho = reduced_state(prepare_bell(bell), [keep])
            rows.append({"bell_state": bell.value, "kept_qubit": keep,
                         "max_deviation": float(np.abs(rho.entries - np.eye(2) / 2).max())})
    frame = pd.DataFrame(rows)
    frame.to_csv(f"{CSV_DIR}/reduced_states.csv", index=False)
    print(f"Largest deviation from I/2: {frame['max_deviation'].max():.2e}")
    return frame


def _attack(text):
    from adversary import AttackSpec

    return AttackSpec.parse(text)


def ctrl_error_samples(attack, min_rounds=ATTACK_CTRL_ROUNDS, n=200, seed=0):
    """Collect CTRL pass/fail outcomes from permissive runs until `min_rounds` are in"""
    from protocol import ProtocolParams, expected_bell, run_protocol

    failures, test_mismatches, run = [], [], 0
    while len(failures) < min_rounds:
        params = ProtocolParams(n=n, p_ctrl_threshold=1.0, p_test_threshold=1.0,
                                seed=int(np.random.SeedSequence([seed, run]).generate_state(1)[0]))
        result = run_protocol(params, attack)
        # rounds of a run aborted for too few SIFT rounds were never Bell-measured
        failures.extend(int(r.ctrl_outcome is not expected_bell(r.encoding_bit))
                        for r in result.ctrl_rounds if r.ctrl_outcome is not None)
        if not math.isnan(result.test_mismatch_rate):
            test_mismatches.append(result.test_mismatch_rate)
        run += 1
    return np.array(failures), test_mismatches


def step_attack_detection(seed=0):
    """Empirical CTRL error per attack against its analytic value, with a 4-sigma band"""
    from visualizations import plot_detection_rates

    cases = [("none", "none", 0.0), ("measure-resend-z", "measure-resend-z", 0.5)]
    cases += [(f"intercept-fake c={c:.3f} d={d:.3f}", f"intercept-fake:c={c},d={d}", 0.75) for c, d in FAKE_QUBITS]
    rows = []
    for name, text, expected in cases:
        failures, mismatches = ctrl_error_samples(_attack(text), seed=seed)
        rate = float(failures.mean())
        band = 4 * math.sqrt(expected * (1 - expected) / len(failures))
        rows.append({"attack": name, "ctrl_rounds": len(failures), "ctrl_error_rate": rate,
                     "expected": expected, "within_4_sigma": abs(rate - expected) <= band,
                     "max_test_mismatch_rate": max(mismatches) if mismatches else float("nan")})
        print(f"{name:<36s} rate={rate:.4f} expected={expected:.2f} T={len(failures)}")
    frame = pd.DataFrame(rows)
    frame.to_csv(f"{CSV_DIR}/attack_detection.csv", index=False)
    plot_detection_rates(frame, f"{IMAGES_DIR}/detection_rates.png")
    return frame


def step_robustness_scan(samples=200, seed=0):
    from adversary import robustness_scan, scan_frame
    from visualizations import plot_robustness_scan

    frame = scan_frame(robustness_scan(samples, seed=seed, measure_resend_fractions=(0.1, 0.5, 1.0)))
    frame.to_csv(f"{CSV_DIR}/robustness_scan.csv", index=False)
    plot_robustness_scan(frame, f"{IMAGES_DIR}/robustness_scan.png")
    flagged = frame[(frame["detection_probability"] < 1e-6) & (frame["avg_trace_distance"] > 1e-6)]
    print(f"Points gaining information undetected: {len(flagged)}/{len(frame)}")
    return frame


def step_table2(n=64, seed=0):
    from metrics import table2_report

    frame = table2_report(n=n, seed=seed)
    frame.to_csv(f"{CSV_DIR}/table2.csv", index=False)
    print(frame[["protocol", "efficiency", "source"]].to_string(index=False))
    return frame


def step_reconciliation(trials=1000, n=64, syndrome_length=16, seed=0):
    """One injected INFO-bit error per trial: correction rate and final-key agreement"""
    from postproc import PaConfig, ReconciliationConfig, final_key_length, privacy_amplify, reconcile

    rng = np.random.default_rng(seed)
    rows = []
    for trial in range(trials):
        alice = rng.integers(0, 2, n)
        bob = alice.copy()
        bob[rng.integers(n)] ^= 1
        outcome = reconcile(alice, bob, ReconciliationConfig(int(rng.integers(2**32)), syndrome_length))
        keys_match = False
        if outcome.success:
            pa = PaConfig(int(rng.integers(2**32)), final_key_length(n, outcome.leaked_bits))
            keys_match = privacy_amplify(alice, pa) == privacy_amplify(outcome.corrected, pa)
        rows.append({"trial": trial, "corrected": outcome.success, "final_keys_match": keys_match})
    frame = pd.DataFrame(rows)
    frame.to_csv(f"{CSV_DIR}/reconciliation.csv", index=False)
    print(f"Corrected: {frame['corrected'].mean():.1%}  keys equal when corrected: "
          f"{bool(frame.loc[frame['corrected'], 'final_keys_match'].all())}")
    return frame


STEPS = (
    ("Honest runs", step_honest_runs),
    ("Key-bit law", step_table1_law),
    ("Reduced Bell states", step_reduced_states),
    ("Attack detection", step_attack_detection),
    ("Robustness scan", step_robustness_scan),
    ("Efficiency table", step_table2),
    ("Reconciliation", step_reconciliation),
)


def run_with_coverage():
    """Run all pipeline steps with coverage tracking"""
    os.makedirs(CSV_DIR, exist_ok=True)
    os.makedirs(IMAGES_DIR, exist_ok=True)

    cov = coverage.Coverage(source=["python"], omit=["python/test_*.py"])
    cov.start()

    print("=" * 60)
    print("RUNNING ALL EXPERIMENTS WITH COVERAGE TRACKING")
    print("=" * 60)

    failed = []
    for name, step in STEPS:
        print(f"\n🔄 {name}...")
        started = time.perf_counter()
        try:
            step()
            print(f"✅ {name} completed in {time.perf_counter() - started:.1f}s")
        except Exception as e:
            failed.append(name)
            print(f"❌ {name} failed: {e}")

    cov.stop()
    cov.save()

    print("\n" + "=" * 60)
    print("COVERAGE REPORT")
    print("=" * 60)
    total = cov.report(show_missing=False)
    print(f"\n🎯 OVERALL COVERAGE: {total:.1f}%")
    cov.html_report(directory="htmlcov")
    print("📄 HTML coverage report generated in 'htmlcov' directory")
    return failed


if __name__ == "__main__":
    sys.exit(1 if run_with_coverage() else 0)
