"""Tests for the protocol phases and full runs"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.join(os.path.dirname(__file__)))

from adversary import AttackSpec
from errors import ArgumentError
from metrics import results_frame
from protocol import (
    HOME,
    TRAVEL,
    AbortReason,
    BobChoice,
    Phase,
    PostProcessParams,
    ProtocolParams,
    RoundRecord,
    RunStreams,
    alice_prepare_round,
    bob_act,
    bob_choose,
    ctrl_check,
    ctrl_error_probability,
    expected_bell,
    extract_raw_key,
    partition_rounds,
    run_protocol,
    test_phase as sample_test_rounds,
)
from qsim import BellState, bell_probabilities, prepare_bell, z_probabilities


def sift_record(index, encoding, h, t):
    return RoundRecord(index, encoding, BobChoice.SIFT, bob_measured_bit=t, alice_h_bit=h)


def completed_run(n, delta, attempts=40, **kwargs):
    """First seed whose run reaches post-processing"""
    for seed in range(attempts):
        result = run_protocol(ProtocolParams(n=n, delta=delta, seed=seed, **kwargs))
        if result.aborted is None:
            return result
    pytest.fail(f"no completed run in {attempts} seeds")


class TestParams:

    @pytest.mark.parametrize("n,delta,pairs", [(64, 0.25, 320), (64, 0.0, 256), (5, 0.15, 23), (1, 0.25, 5)])
    def test_num_pairs(self, n, delta, pairs):
        assert ProtocolParams(n=n, delta=delta).num_pairs == pairs

    def test_n_must_be_positive(self):
        with pytest.raises(ArgumentError, match=r"n must be an integer >= 1 \(got 0\)"):
            ProtocolParams(n=0)

    @pytest.mark.parametrize("kwargs", [{"delta": -0.1}, {"p_ctrl_threshold": 1.5}, {"p_test_threshold": -0.01}])
    def test_invalid_params(self, kwargs):
        with pytest.raises(ArgumentError):
            ProtocolParams(n=8, **kwargs)

    def test_postprocess_defaults(self):
        assert PostProcessParams().resolve(64) == (16, 8)
        assert PostProcessParams().resolve(5) == (2, 1)
        with pytest.raises(ArgumentError):
            PostProcessParams(syndrome_length=65).resolve(64)

    def test_round_record_requires_bit_for_sift_only(self):
        with pytest.raises(ArgumentError):
            RoundRecord(0, 0, BobChoice.SIFT)
        with pytest.raises(ArgumentError):
            RoundRecord(0, 0, BobChoice.CTRL, bob_measured_bit=1)


class TestRoundOperations:

    def test_alice_prepare_round_encodings(self):
        rng = np.random.default_rng(3)
        seen = set()
        for _ in range(50):
            bit, state = alice_prepare_round(rng)
            assert bell_probabilities(state, HOME, TRAVEL)[expected_bell(bit)] == pytest.approx(1)
            seen.add(bit)
        assert seen == {0, 1}

    def test_expected_bell(self):
        assert expected_bell(0) is BellState.PHI_PLUS
        assert expected_bell(1) is BellState.PSI_PLUS

    def test_bob_choice_is_fair(self):
        """SIFT choices over 4000 draws stay within 4 sigma of one half"""
        rng = RunStreams.from_seed(9).bob
        trials = 4000
        sift = sum(bob_choose(rng) is BobChoice.SIFT for _ in range(trials))
        assert abs(sift / trials - 0.5) <= 4 * math.sqrt(0.25 / trials)

    def test_ctrl_leaves_state_untouched(self):
        state = prepare_bell(BellState.PSI_PLUS)
        bit, after = bob_act(state, TRAVEL, BobChoice.CTRL, np.random.default_rng(0))
        assert bit is None
        assert after is state

    def test_ctrl_rejects_bad_travel_index(self):
        with pytest.raises(ArgumentError):
            bob_act(prepare_bell(BellState.PHI_PLUS), 5, BobChoice.CTRL, np.random.default_rng(0))

    def test_sift_collapses_travel_qubit(self):
        bit, after = bob_act(prepare_bell(BellState.PHI_PLUS), TRAVEL, BobChoice.SIFT, np.random.default_rng(0))
        assert z_probabilities(after, TRAVEL)[bit] == pytest.approx(1)
        assert z_probabilities(after, HOME)[bit] == pytest.approx(1)

    def test_ctrl_check_on_honest_pair(self):
        rng = np.random.default_rng(0)
        for bell in (BellState.PHI_PLUS, BellState.PSI_PLUS):
            state = prepare_bell(bell)
            outcome, passed = ctrl_check(state, bell, rng)
            assert passed and outcome is bell
            assert ctrl_error_probability(state, bell) == 0.0


class TestKeyLaw:

    @pytest.mark.parametrize("encoding,h,t", [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)])
    def test_table_rows(self, encoding, h, t):
        """T = H xor encoding; Bob's key bit H xor T equals Alice's encoding"""
        alice, bob = extract_raw_key([sift_record(0, encoding, h, t)])
        assert alice == bob == (encoding,)
        assert h ^ t == encoding

    def test_missing_measurement_rejected(self):
        record = RoundRecord(0, 1, BobChoice.SIFT, bob_measured_bit=0)
        with pytest.raises(ArgumentError):
            extract_raw_key([record])


class TestPhases:

    def test_partition_flags_insufficient_sift(self):
        rounds = [RoundRecord(i, 0, BobChoice.CTRL) for i in range(10)]
        rounds += [sift_record(10 + i, 0, 0, 0) for i in range(3)]
        ctrl, sift, abort = partition_rounds(rounds, n=2)
        assert (len(ctrl), len(sift), abort) == (10, 3, AbortReason.INSUFFICIENT_SIFT)
        assert partition_rounds(rounds + [sift_record(13, 0, 0, 0)], n=2)[2] is None

    def test_test_phase_counts_mismatches(self):
        # every round disagrees with the key law, so any sample mismatches fully
        sift = [sift_record(i, 0, 0, 1) for i in range(8)]
        chosen, rate, passed = sample_test_rounds(sift, 4, np.random.default_rng(0), threshold=0.5)
        assert len(chosen) == 4 and len({r.index for r in chosen}) == 4
        assert rate == 1.0 and not passed
        assert sum(r.is_test for r in sift) == 4

    def test_test_phase_passes_at_threshold(self):
        sift = [sift_record(i, i % 2, 0, i % 2) for i in range(6)]
        _, rate, passed = sample_test_rounds(sift, 3, np.random.default_rng(1))
        assert rate == 0.0 and passed

    def test_test_phase_needs_2n_rounds(self):
        with pytest.raises(ArgumentError):
            sample_test_rounds([sift_record(0, 0, 0, 0)], 1, np.random.default_rng(0))


class TestHonestRuns:

    def test_honest_completeness(self):
        """100 seeded honest runs: no check ever fails and final keys agree"""
        results = [run_protocol(ProtocolParams(n=64, seed=seed)) for seed in range(100)]
        aborts = [r.aborted for r in results if r.aborted is not None]
        assert all(a is AbortReason.INSUFFICIENT_SIFT for a in aborts)
        assert len(aborts) <= 3
        for r in results:
            if r.aborted is not None:
                continue
            assert r.phase_reached is Phase.POST_PROCESS
            assert r.ctrl_error_rate == 0.0
            assert r.test_mismatch_rate == 0.0
            assert r.raw_key_alice == r.raw_key_bob
            assert r.reconciled
            assert r.final_key is not None and len(r.final_key) == 64 - 16 - 8
            assert r.detection_probability == pytest.approx(0.0, abs=1e-12)

    def test_run_shapes(self):
        r = completed_run(16, 0.25)
        assert len(r.rounds) == 80
        assert len(r.test_indices) == 16
        assert set(r.test_indices).isdisjoint(r.raw_indices)
        assert len(r.raw_indices) == len(r.sift_rounds) - 16
        assert len(r.info_string) == 16
        assert all(r.rounds[i].is_test for i in r.test_indices)

    @pytest.mark.parametrize("attack", ["none", "measure-resend-z:fraction=0.5", "unitary-return:family=haar"])
    def test_same_seed_same_run(self, attack):
        params = ProtocolParams(n=16, seed=42, p_ctrl_threshold=1.0, p_test_threshold=1.0)
        a = run_protocol(params, AttackSpec.parse(attack))
        b = run_protocol(params, AttackSpec.parse(attack))
        assert a.rounds == b.rounds
        assert (a.test_indices, a.raw_indices) == (b.test_indices, b.raw_indices)
        assert (a.final_key_alice, a.final_key_bob) == (b.final_key_alice, b.final_key_bob)
        assert a.eve.h_sift_announcements == b.eve.h_sift_announcements
        assert results_frame([a]).equals(results_frame([b]))

    def test_honest_choices_independent_of_attack(self):
        honest = run_protocol(ProtocolParams(n=16, seed=8, p_ctrl_threshold=1, p_test_threshold=1))
        attacked = run_protocol(ProtocolParams(n=16, seed=8, p_ctrl_threshold=1, p_test_threshold=1),
                                AttackSpec.measure_resend_z())
        assert [r.bob_choice for r in honest.rounds] == [r.bob_choice for r in attacked.rounds]
        assert [r.encoding_bit for r in honest.rounds] == [r.encoding_bit for r in attacked.rounds]

    def test_efficiency_counts_at_zero_delta(self):
        n = 32
        r = completed_run(n, 0.0)
        assert (r.counts.b_s, r.counts.q_t, r.counts.b_t) == (n, 4 * n, 4 * n)
        assert r.counts.physical_q_t == 8 * n
        assert str(r.counts.eta) == "1/8"


class TestAborts:

    def test_ctrl_abort_under_measure_resend(self):
        r = run_protocol(ProtocolParams(n=64, seed=1), AttackSpec.measure_resend_z())
        assert r.aborted is AbortReason.CTRL_ERROR_RATE
        assert r.phase_reached is Phase.CTRL_CHECK
        assert r.final_key is None
        assert r.counts.b_s == 0
        assert r.ctrl_error_rate > 0

    def test_abort_soundness_at_small_n(self):
        """InsufficientSift iff fewer than 2n of the N Bob draws are SIFT"""
        n = 2
        for seed in range(200):
            bob = RunStreams.from_seed(seed).bob
            sift = sum(bob_choose(bob) is BobChoice.SIFT for _ in range(ProtocolParams(n=n).num_pairs))
            r = run_protocol(ProtocolParams(n=n, seed=seed))
            assert (r.aborted is AbortReason.INSUFFICIENT_SIFT) == (sift < 2 * n)

    def test_insufficient_sift_is_rare_at_default_delta(self):
        """Bob's draws for 1,000 seeds at n=64: fewer than 1% lack 128 SIFT rounds"""
        n, pairs = 64, ProtocolParams(n=64).num_pairs
        short = 0
        for seed in range(1000):
            bob = RunStreams.from_seed(seed).bob
            sift = sum(bob_choose(bob) is BobChoice.SIFT for _ in range(pairs))
            short += sift < 2 * n
        assert short < 10

    def test_empirical_detection_tracks_expected(self):
        """Observed flags per pair stay within 4 sigma of the Born-rule expectation"""
        for seed in range(4, 14):
            params = ProtocolParams(n=64, seed=seed, p_ctrl_threshold=1.0, p_test_threshold=1.0)
            r = run_protocol(params, AttackSpec.intercept_resend_fake(0.6, 0.8))
            if r.aborted is None:
                break
        assert r.aborted is None
        flagged = sum(1 for x in r.ctrl_rounds if x.ctrl_outcome is not expected_bell(x.encoding_bit))
        assert r.empirical_detection_rate >= flagged / len(r.rounds) > 0
        bound = 4 * math.sqrt(0.25 / len(r.rounds))
        assert abs(r.empirical_detection_rate - r.detection_probability) <= bound

    def test_empirical_detection_zero_when_honest(self):
        r = completed_run(16, 0.25)
        assert r.empirical_detection_rate == 0.0

    def test_thresholds_of_one_never_abort_on_checks(self):
        params = ProtocolParams(n=32, seed=3, p_ctrl_threshold=1.0, p_test_threshold=1.0)
        r = run_protocol(params, AttackSpec.intercept_resend_fake(0.6, 0.8))
        assert r.aborted in (None, AbortReason.INSUFFICIENT_SIFT)
