"""
Semi-quantum key distribution with Bell pairs: quantum Alice, classical Bob.

Alice encodes one bit per EPR pair (|phi+> = 0, |psi+> = 1 via X on the home
qubit) and sends the travel qubit. Bob either reflects it (CTRL) or measures
and resends it in the computational basis (SIFT). Alice Bell-measures CTRL
pairs, then measures the SIFT home qubits; a random half of the required
SIFT rounds is published as TEST, the rest give the raw key via H xor T.

Phases run in order: Prepare, Transmit, Announce, CtrlCheck, TestCheck,
RawKey, PostProcess. Aborts are recorded on the result, never raised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from adversary import AttackSpec, EveRecord, hook_forward, hook_return
from errors import ArgumentError
from metrics import EfficiencyReport, count_transcript
from postproc import (
    PaConfig,
    ReconciliationConfig,
    final_key_length,
    privacy_amplify,
    reconcile,
)
from qsim import (
    PAULI_X,
    BellState,
    StateVector,
    apply_gate,
    bell_measure,
    bell_probabilities,
    measure_z,
    prepare_bell,
    z_probabilities,
)

logger = logging.getLogger(__name__)

HOME, TRAVEL = 0, 1
FIRST_ANCILLA = 2
DEFAULT_DELTA = 0.25


class BobChoice(Enum):
    CTRL = "CTRL"
    SIFT = "SIFT"


class AbortReason(Enum):
    INSUFFICIENT_SIFT = "InsufficientSift"
    CTRL_ERROR_RATE = "CtrlErrorRate"
    TEST_MISMATCH = "TestMismatch"


class Phase(Enum):
    PREPARE = "Prepare"
    TRANSMIT = "Transmit"
    ANNOUNCE = "Announce"
    CTRL_CHECK = "CtrlCheck"
    TEST_CHECK = "TestCheck"
    RAW_KEY = "RawKey"
    POST_PROCESS = "PostProcess"


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    delta: float = DEFAULT_DELTA
    p_ctrl_threshold: float = 0.0
    p_test_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ArgumentError(f"n must be an integer >= 1 (got {self.n})")
        if self.delta < 0:
            raise ArgumentError(f"delta must be >= 0 (got {self.delta})")
        for name in ("p_ctrl_threshold", "p_test_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ArgumentError(f"{name} must lie in [0, 1] (got {value})")
        if self.seed < 0:
            raise ArgumentError(f"seed must be >= 0 (got {self.seed})")

    @property
    def num_pairs(self) -> int:
        """N = ceil(4 n (1 + delta)), computed exactly on the decimal value of delta"""
        return math.ceil(4 * self.n * (1 + Fraction(str(self.delta))))


@dataclass(frozen=True)
class PostProcessParams:
    syndrome_length: int | None = None
    security_margin: int | None = None

    def resolve(self, n: int) -> tuple[int, int]:
        """Syndrome length (default ceil(n/4)) and security margin (default ceil(n/8))"""
        s = math.ceil(n / 4) if self.syndrome_length is None else self.syndrome_length
        margin = math.ceil(n / 8) if self.security_margin is None else self.security_margin
        if not 0 <= s <= n:
            raise ArgumentError(f"syndrome length must lie in [0, n={n}] (got {s})")
        if margin < 0:
            raise ArgumentError(f"security margin must be >= 0 (got {margin})")
        return s, margin


@dataclass
class RunStreams:
    """One seeded stream per role so honest choices do not depend on the attack"""

    alice: np.random.Generator
    bob: np.random.Generator
    channel: np.random.Generator
    eve: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RunStreams":
        children = np.random.SeedSequence(seed).spawn(4)
        return cls(*(np.random.default_rng(child) for child in children))


@dataclass
class RoundRecord:
    index: int
    encoding_bit: int
    bob_choice: BobChoice
    bob_measured_bit: int | None = None
    alice_h_bit: int | None = None
    ctrl_outcome: BellState | None = None
    is_test: bool = False
    ctrl_error_probability: float | None = None
    test_error_probability: float | None = None

    def __post_init__(self):
        if (self.bob_measured_bit is not None) != (self.bob_choice is BobChoice.SIFT):
            raise ArgumentError(f"round {self.index}: Bob's bit must be present exactly for SIFT")


@dataclass
class RunResult:
    params: ProtocolParams
    attack: str
    rounds: list[RoundRecord]
    phase_reached: Phase = Phase.PREPARE
    aborted: AbortReason | None = None
    ctrl_error_rate: float = float("nan")
    test_mismatch_rate: float = float("nan")
    test_indices: list[int] = field(default_factory=list)
    raw_indices: list[int] = field(default_factory=list)
    raw_key_alice: tuple[int, ...] = ()
    raw_key_bob: tuple[int, ...] = ()
    info_string: tuple[int, ...] | None = None
    info_string_bob: tuple[int, ...] | None = None
    leaked_bits: int = 0
    reconciled: bool | None = None
    final_key_alice: tuple[int, ...] | None = None
    final_key_bob: tuple[int, ...] | None = None
    counts: EfficiencyReport | None = None
    eve: EveRecord = field(default_factory=EveRecord)

    @property
    def ctrl_rounds(self) -> list[RoundRecord]:
        return [r for r in self.rounds if r.bob_choice is BobChoice.CTRL]

    @property
    def sift_rounds(self) -> list[RoundRecord]:
        return [r for r in self.rounds if r.bob_choice is BobChoice.SIFT]

    @property
    def raw_rounds(self) -> list[RoundRecord]:
        return [self.rounds[i] for i in self.raw_indices]

    @property
    def info_rounds(self) -> list[RoundRecord]:
        if self.info_string is None:
            return []
        return self.raw_rounds[: self.params.n]

    @property
    def final_key(self) -> tuple[int, ...] | None:
        if self.final_key_alice is not None and self.final_key_alice == self.final_key_bob:
            return self.final_key_alice
        return None

    @property
    def detection_probability(self) -> float:
        """Expected number of flagged CTRL and TEST checks per EPR pair"""
        expected = sum(r.ctrl_error_probability or 0.0 for r in self.ctrl_rounds)
        expected += sum(self.rounds[i].test_error_probability or 0.0 for i in self.test_indices)
        return expected / len(self.rounds)

    @property
    def empirical_detection_rate(self) -> float:
        """Share of EPR pairs whose CTRL check or TEST comparison actually flagged an error"""
        flagged = sum(1 for r in self.ctrl_rounds
                      if r.ctrl_outcome is not None and r.ctrl_outcome is not expected_bell(r.encoding_bit))
        flagged += sum(1 for i in self.test_indices
                       if self.rounds[i].bob_measured_bit != _implied_bob_bit(self.rounds[i]))
        return flagged / len(self.rounds)


def expected_bell(encoding_bit: int) -> BellState:
    return BellState.PSI_PLUS if encoding_bit else BellState.PHI_PLUS


def alice_prepare_round(rng: np.random.Generator) -> tuple[int, StateVector]:
    """Prepare |phi+> on (home, travel) and apply X to home with probability 1/2"""
    encoding_bit = int(rng.integers(2))
    state = prepare_bell(BellState.PHI_PLUS)
    if encoding_bit:
        state = apply_gate(state, PAULI_X, [HOME])
    return encoding_bit, state


def bob_choose(rng: np.random.Generator) -> BobChoice:
    return BobChoice.SIFT if rng.integers(2) else BobChoice.CTRL


def bob_act(
    state: StateVector, travel: int, choice: BobChoice, rng: np.random.Generator
) -> tuple[int | None, StateVector]:
    """CTRL reflects untouched; SIFT measures and resends the collapsed qubit"""
    if choice is BobChoice.CTRL:
        if not 0 <= travel < state.num_qubits:
            raise ArgumentError(f"travel index {travel} outside register of {state.num_qubits}")
        return None, state
    return measure_z(state, travel, rng)


def ctrl_error_probability(state: StateVector, expected: BellState) -> float:
    probabilities = bell_probabilities(state, HOME, TRAVEL)
    return float(sum(p for outcome, p in probabilities.items() if outcome is not expected))


def _ctrl_measure(
    state: StateVector, expected: BellState, rng: np.random.Generator
) -> tuple[BellState, bool, StateVector]:
    outcome, state = bell_measure(state, HOME, TRAVEL, rng)
    return outcome, outcome is expected, state


def ctrl_check(
    state: StateVector, expected: BellState, rng: np.random.Generator
) -> tuple[BellState, bool]:
    outcome, passed, _ = _ctrl_measure(state, expected, rng)
    return outcome, passed


def partition_rounds(
    rounds: Sequence[RoundRecord], n: int
) -> tuple[list[RoundRecord], list[RoundRecord], AbortReason | None]:
    ctrl = [r for r in rounds if r.bob_choice is BobChoice.CTRL]
    sift = [r for r in rounds if r.bob_choice is BobChoice.SIFT]
    abort = AbortReason.INSUFFICIENT_SIFT if len(sift) < 2 * n else None
    return ctrl, sift, abort


def _implied_bob_bit(r: RoundRecord) -> int:
    # key law: H xor T equals the encoding bit
    return r.alice_h_bit ^ r.encoding_bit


def test_phase(
    sift_rounds: Sequence[RoundRecord], n: int, rng: np.random.Generator, threshold: float = 0.0
) -> tuple[list[RoundRecord], float, bool]:
    """Pick n SIFT rounds uniformly without replacement and compare Bob's published bits"""
    if len(sift_rounds) < 2 * n:
        raise ArgumentError(f"TEST needs at least 2n={2 * n} SIFT rounds, got {len(sift_rounds)}")
    for r in sift_rounds:
        if r.alice_h_bit is None or r.bob_measured_bit is None:
            raise ArgumentError(f"round {r.index} lacks a home or travel measurement")
    chosen = sorted(rng.choice(len(sift_rounds), size=n, replace=False).tolist())
    test_set = [sift_rounds[i] for i in chosen]
    for r in test_set:
        r.is_test = True
    mismatches = sum(1 for r in test_set if r.bob_measured_bit != _implied_bob_bit(r))
    rate = mismatches / n
    return test_set, rate, rate <= threshold




def extract_raw_key(rounds: Sequence[RoundRecord]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Alice keys the encoding bit; Bob keys announced H xor his T"""
    alice, bob = [], []
    for r in rounds:
        if r.alice_h_bit is None or r.bob_measured_bit is None:
            raise ArgumentError(f"round {r.index} lacks a home or travel measurement")
        alice.append(r.encoding_bit)
        bob.append(r.alice_h_bit ^ r.bob_measured_bit)
    return tuple(alice), tuple(bob)


def _finish(result: RunResult, phase: Phase, abort: AbortReason | None = None) -> RunResult:
    result.phase_reached = phase
    result.aborted = abort
    if abort is not None:
        logger.info("run seed=%d aborted in %s: %s", result.params.seed, phase.value, abort.value)
    result.counts = count_transcript(result)
    return result


def run_protocol(
    params: ProtocolParams,
    attack: AttackSpec | None = None,
    postprocess: PostProcessParams | None = None,
) -> RunResult:
    attack = attack or AttackSpec.none()
    postprocess = postprocess or PostProcessParams()
    streams = RunStreams.from_seed(params.seed)
    n, total = params.n, params.num_pairs
    eve = EveRecord()
    rounds: list[RoundRecord] = []
    # Alice's quantum memory: joint state of each pair (plus any ancilla) until its check
    memory: list[StateVector] = []

    # Prepare + Transmit: one pair at a time
    for i in range(total):
        encoding_bit, state = alice_prepare_round(streams.alice)
        state, delta = hook_forward(state, TRAVEL, attack, streams.eve, index=i)
        eve.absorb(delta)
        choice = bob_choose(streams.bob)
        bit, state = bob_act(state, TRAVEL, choice, streams.channel)
        state, delta = hook_return(state, TRAVEL, attack, streams.eve, index=i)
        eve.absorb(delta)
        rounds.append(RoundRecord(i, encoding_bit, choice, bob_measured_bit=bit))
        memory.append(state)
    result = RunResult(params=params, attack=attack.label, rounds=rounds, eve=eve)
    logger.debug("transmitted %d pairs (n=%d, delta=%s)", total, n, params.delta)

    # Announce: Bob names his CTRL rounds
    eve.bob_choices = {r.index: r.bob_choice.value for r in rounds}
    ctrl, sift, abort = partition_rounds(rounds, n)
    if abort is not None:
        return _finish(result, Phase.ANNOUNCE, abort)

    # CtrlCheck: Bell measurement on every reflected pair
    errors = 0
    for r in ctrl:
        expected = expected_bell(r.encoding_bit)
        state = memory[r.index]
        r.ctrl_error_probability = ctrl_error_probability(state, expected)
        r.ctrl_outcome, passed, state = _ctrl_measure(state, expected, streams.channel)
        memory[r.index] = state
        errors += int(not passed)
        eve.capture_ancilla(r.index, state, FIRST_ANCILLA)
    result.ctrl_error_rate = errors / len(ctrl) if ctrl else 0.0
    if result.ctrl_error_rate > params.p_ctrl_threshold:
        return _finish(result, Phase.CTRL_CHECK, AbortReason.CTRL_ERROR_RATE)

    # TestCheck: Alice measures every SIFT home qubit, then samples n TEST rounds
    for r in sift:
        state = memory[r.index]
        wrong_h = r.bob_measured_bit ^ r.encoding_bit ^ 1
        r.test_error_probability = float(z_probabilities(state, HOME)[wrong_h])
        r.alice_h_bit, state = measure_z(state, HOME, streams.channel)
        memory[r.index] = state
        eve.capture_ancilla(r.index, state, FIRST_ANCILLA)
    test_set, rate, passed = test_phase(sift, n, streams.alice, params.p_test_threshold)
    result.test_indices = [r.index for r in test_set]
    result.test_mismatch_rate = rate
    eve.test_indices = list(result.test_indices)
    eve.bob_test_bits = {r.index: r.bob_measured_bit for r in test_set}
    if not passed:
        return _finish(result, Phase.TEST_CHECK, AbortReason.TEST_MISMATCH)

    # RawKey: Alice announces the remaining H_SIFT results
    raw = [r for r in sift if not r.is_test]
    result.raw_indices = [r.index for r in raw]
    eve.h_sift_announcements = {r.index: r.alice_h_bit for r in raw}
    result.raw_key_alice, result.raw_key_bob = extract_raw_key(raw)
    result.info_string = result.raw_key_alice[:n]
    result.info_string_bob = result.raw_key_bob[:n]

    # PostProcess: syndrome reconciliation then Toeplitz hashing, seeds announced by Alice
    syndrome_length, margin = postprocess.resolve(n)
    parity_seed, hash_seed = (int(x) for x in streams.alice.integers(2**32, size=2))
    eve.public_seeds = {"parity_matrix_seed": parity_seed, "hash_seed": hash_seed}
    outcome = reconcile(result.info_string, result.info_string_bob,
                        ReconciliationConfig(parity_seed, syndrome_length))
    result.leaked_bits = outcome.leaked_bits
    result.reconciled = outcome.success
    pa = PaConfig(hash_seed, final_key_length(n, outcome.leaked_bits, margin))
    result.final_key_alice = privacy_amplify(result.info_string, pa)
    if outcome.success:
        result.final_key_bob = privacy_amplify(outcome.corrected, pa)
    else:
        logger.warning("run seed=%d: reconciliation failed", params.seed)
    return _finish(result, Phase.POST_PROCESS)
