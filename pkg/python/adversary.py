"""
Eavesdropper models for the two channel legs and what they leak.

Forward leg (Alice -> Bob): intercept-resend with a fake qubit, or a plain
computational-basis measure-resend. Return leg (Bob -> Alice): a unitary on
travel qubit + fresh ancilla register. Eve also hears every classical message.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import pandas as pd

from errors import ConfigError, ValidationError
from qsim import (
    TOLERANCE,
    DensityMatrix,
    Gate,
    StateVector,
    apply_gate,
    haar_unitary,
    make_register,
    measure_z,
    preparation_gate,
    reduced_state,
    reset_qubit,
    tensor,
    trace_distance,
)

logger = logging.getLogger(__name__)

DEFAULT_ANCILLA_QUBITS = 2
DEFAULT_SCAN_N = 100
SCAN_FAMILIES = ("haar", "constrained", "constrained-equal", "constrained-orthogonal")
UNITARY_FAMILIES = ("identity", "cnot") + SCAN_FAMILIES


class AttackKind(Enum):
    NONE = "none"
    INTERCEPT_RESEND_FAKE = "intercept-fake"
    MEASURE_RESEND_Z = "measure-resend-z"
    UNITARY_RETURN = "unitary-return"


@dataclass(frozen=True, eq=False)
class AttackSpec:
    """Adversary model plus the rounds it targets"""

    kind: AttackKind = AttackKind.NONE
    c: complex = 1.0
    d: complex = 0.0
    unitary: Gate | None = None
    ancilla_qubits: int = DEFAULT_ANCILLA_QUBITS
    fraction: float = 1.0
    applies_to: Callable[[int], bool] | None = None
    label: str = ""

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValidationError(f"attack fraction {self.fraction} outside [0, 1]")
        if self.kind is AttackKind.INTERCEPT_RESEND_FAKE:
            norm = abs(self.c) ** 2 + abs(self.d) ** 2
            if abs(norm - 1.0) > TOLERANCE:
                raise ValidationError(f"fake qubit has |c|^2+|d|^2 = {norm}, expected 1")
        if self.kind is AttackKind.UNITARY_RETURN:
            if self.ancilla_qubits < 1:
                raise ValidationError("unitary attack needs at least one ancilla qubit")
            if self.unitary is None:
                raise ValidationError("unitary attack needs a unitary")
            if self.unitary.arity != 1 + self.ancilla_qubits:
                raise ValidationError(
                    f"unitary acts on {self.unitary.arity} qubits, "
                    f"expected travel + {self.ancilla_qubits} ancilla"
                )
        if not self.label:
            object.__setattr__(self, "label", self.kind.value)

    @classmethod
    def none(cls) -> "AttackSpec":
        return cls()

    @classmethod
    def intercept_resend_fake(cls, c: complex, d: complex, fraction: float = 1.0) -> "AttackSpec":
        return cls(AttackKind.INTERCEPT_RESEND_FAKE, c=c, d=d, fraction=fraction,
                   label=f"intercept-fake:c={c},d={d}")

    @classmethod
    def measure_resend_z(cls, fraction: float = 1.0) -> "AttackSpec":
        label = "measure-resend-z" if fraction == 1.0 else f"measure-resend-z:fraction={fraction}"
        return cls(AttackKind.MEASURE_RESEND_Z, fraction=fraction, label=label)

    @classmethod
    def unitary_return(
        cls, unitary: Gate, ancilla_qubits: int = DEFAULT_ANCILLA_QUBITS, label: str = ""
    ) -> "AttackSpec":
        return cls(AttackKind.UNITARY_RETURN, unitary=unitary,
                   ancilla_qubits=ancilla_qubits, label=label or "unitary-return")

    @classmethod
    def parse(cls, text: str) -> "AttackSpec":
        """Parse `kind[:key=value,...]`, e.g. `intercept-fake:c=0.6,d=0.8`"""
        name, _, rest = text.strip().partition(":")
        options = {}
        for item in filter(None, rest.split(",")):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"attack option '{item}' is not key=value")
            options[key.strip()] = value.strip()
        try:
            if name == AttackKind.NONE.value:
                spec = cls.none()
            elif name == AttackKind.INTERCEPT_RESEND_FAKE.value:
                spec = cls.intercept_resend_fake(
                    complex(options.pop("c", "1")), complex(options.pop("d", "0")),
                    float(options.pop("fraction", "1")))
            elif name == AttackKind.MEASURE_RESEND_Z.value:
                spec = cls.measure_resend_z(float(options.pop("fraction", "1")))
            elif name == AttackKind.UNITARY_RETURN.value:
                family = options.pop("family", "identity")
                ancilla = int(options.pop("ancilla", str(DEFAULT_ANCILLA_QUBITS)))
                seed = int(options.pop("seed", "0"))
                unitary = family_unitary(family, ancilla, np.random.default_rng(seed))
                spec = cls.unitary_return(unitary, ancilla, label=f"unitary-return:family={family}")
            else:
                raise ConfigError(f"unknown attack '{name}'")
        except ValidationError as e:
            raise ConfigError(str(e)) from e
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"bad attack option in '{text}': {e}") from e
        if options:
            raise ConfigError(f"unknown attack options {sorted(options)} for '{name}'")
        return spec

    def targets(self, index: int, rng: np.random.Generator) -> bool:
        """Whether round `index` is attacked; partial attacks draw from Eve's stream"""
        if self.kind is AttackKind.NONE:
            return False
        if self.applies_to is not None and not self.applies_to(index):
            return False
        if self.fraction < 1.0:
            return bool(rng.random() < self.fraction)
        return True


@dataclass
class EveRoundRecord:
    index: int
    attacked: bool = False
    measured_bit: int | None = None
    ancilla: DensityMatrix | None = None


@dataclass
class EveRecord:
    """Everything Eve holds after a run: per-round data plus the public transcript"""

    rounds: dict[int, EveRoundRecord] = field(default_factory=dict)
    bob_choices: dict[int, str] = field(default_factory=dict)
    test_indices: list[int] = field(default_factory=list)
    bob_test_bits: dict[int, int] = field(default_factory=dict)
    h_sift_announcements: dict[int, int] = field(default_factory=dict)
    public_seeds: dict[str, int] = field(default_factory=dict)

    def absorb(self, delta: EveRoundRecord) -> None:
        current = self.rounds.setdefault(delta.index, EveRoundRecord(delta.index))
        current.attacked = current.attacked or delta.attacked
        if delta.measured_bit is not None:
            current.measured_bit = delta.measured_bit
        if delta.ancilla is not None:
            current.ancilla = delta.ancilla

    def capture_ancilla(self, index: int, state: StateVector, first_ancilla: int) -> None:
        """Store Eve's reduced ancilla state at the end of the round"""
        record = self.rounds.get(index)
        if record is None or not record.attacked or state.num_qubits <= first_ancilla:
            return
        record.ancilla = reduced_state(state, range(first_ancilla, state.num_qubits))


def hook_forward(
    state: StateVector, travel: int, spec: AttackSpec, rng: np.random.Generator, index: int = 0
) -> tuple[StateVector, EveRoundRecord]:
    delta = EveRoundRecord(index)
    if spec.kind is AttackKind.INTERCEPT_RESEND_FAKE and spec.targets(index, rng):
        bit, state = reset_qubit(state, travel, rng)
        state = apply_gate(state, preparation_gate(spec.c, spec.d), [travel])
        delta.attacked, delta.measured_bit = True, bit
    elif spec.kind is AttackKind.MEASURE_RESEND_Z and spec.targets(index, rng):
        bit, state = measure_z(state, travel, rng)
        delta.attacked, delta.measured_bit = True, bit
    return state, delta


def hook_return(
    state: StateVector, travel: int, spec: AttackSpec, rng: np.random.Generator, index: int = 0
) -> tuple[StateVector, EveRoundRecord]:
    delta = EveRoundRecord(index)
    if spec.kind is AttackKind.UNITARY_RETURN and spec.targets(index, rng):
        first = state.num_qubits
        state = tensor(state, make_register(spec.ancilla_qubits))
        ancillas = list(range(first, first + spec.ancilla_qubits))
        state = apply_gate(state, spec.unitary, [travel] + ancillas)
        delta.attacked = True
    return state, delta


def _random_unit_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def constrained_unitary(e0: np.ndarray, e1: np.ndarray, rng: np.random.Generator) -> Gate:
    """Unitary on travel+ancilla with |x>|0...0> -> |x>|E_x>; other columns random"""
    e0, e1 = np.asarray(e0, dtype=complex), np.asarray(e1, dtype=complex)
    dim_e = len(e0)
    dim = 2 * dim_e
    v0 = np.kron([1, 0], e0)
    v1 = np.kron([0, 1], e1)
    seed_columns = np.column_stack(
        [v0, v1, rng.standard_normal((dim, dim - 2)) + 1j * rng.standard_normal((dim, dim - 2))]
    )
    q, r = np.linalg.qr(seed_columns)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    q[:, 0], q[:, 1] = v0, v1
    # column 0 is |0>|0..0>, column dim_e is |1>|0..0>
    order = [0] + list(range(2, dim_e + 1)) + [1] + list(range(dim_e + 1, dim))
    return Gate(q[:, order])


def cnot_unitary(ancilla_qubits: int) -> Gate:
    """Copy the travel bit into the first ancilla qubit"""
    dim_e = 2**ancilla_qubits
    flip_first = np.kron(np.array([[0, 1], [1, 0]]), np.eye(dim_e // 2))
    zeros = np.zeros((dim_e, dim_e))
    return Gate(np.block([[np.eye(dim_e), zeros], [zeros, flip_first]]))


def family_unitary(family: str, ancilla_qubits: int, rng: np.random.Generator) -> Gate:
    dim_e = 2**ancilla_qubits
    if family == "identity":
        return Gate(np.eye(2 * dim_e))
    if family == "cnot":
        return cnot_unitary(ancilla_qubits)
    if family == "haar":
        return haar_unitary(2 * dim_e, rng)
    if family == "constrained":
        return constrained_unitary(_random_unit_vector(dim_e, rng), _random_unit_vector(dim_e, rng), rng)
    if family == "constrained-equal":
        e = _random_unit_vector(dim_e, rng)
        return constrained_unitary(e, e, rng)
    if family == "constrained-orthogonal":
        e0 = _random_unit_vector(dim_e, rng)
        e1 = _random_unit_vector(dim_e, rng)
        e1 = e1 - np.vdot(e0, e1) * e0
        return constrained_unitary(e0, e1 / np.linalg.norm(e1), rng)
    raise ConfigError(f"unknown unitary family '{family}' (choose from {', '.join(UNITARY_FAMILIES)})")


@dataclass(frozen=True)
class EveInformation:
    guess_accuracy: float
    avg_trace_distance: float


def _ancilla_distance(records: EveRecord, key_rounds) -> float:
    """Mean over Alice's public H bit of the distance between Eve's key-0 and key-1 states"""
    groups: dict[tuple[int, int], list[np.ndarray]] = {}
    for r in key_rounds:
        eve = records.rounds.get(r.index)
        if eve is None or eve.ancilla is None:
            continue
        groups.setdefault((r.alice_h_bit, r.encoding_bit), []).append(eve.ancilla.entries)
    distances = []
    for h in (0, 1):
        if (h, 0) in groups and (h, 1) in groups:
            rho0 = DensityMatrix(np.mean(groups[(h, 0)], axis=0))
            rho1 = DensityMatrix(np.mean(groups[(h, 1)], axis=0))
            distances.append(trace_distance(rho0, rho1))
    return float(np.mean(distances)) if distances else 0.0


def eve_key_information(records: EveRecord, result, rng: np.random.Generator | None = None) -> EveInformation:
    """Eve's guess accuracy on the INFO bits and her ancilla distinguishability"""
    rng = rng if rng is not None else np.random.default_rng(result.params.seed)
    distance = _ancilla_distance(records, result.raw_rounds)
    info_rounds = result.info_rounds
    if not info_rounds:
        return EveInformation(0.5, distance)
    correct = 0
    for r in info_rounds:
        eve = records.rounds.get(r.index)
        h = records.h_sift_announcements.get(r.index, r.alice_h_bit)
        if eve is not None and eve.measured_bit is not None:
            # key bit = H xor T
            guess = eve.measured_bit ^ h
            correct += int(guess == r.encoding_bit)
        elif eve is not None and eve.ancilla is not None:
            # Helstrom measurement succeeds with probability (1 + D) / 2
            correct += int(rng.random() < 0.5 * (1.0 + distance))
        else:
            correct += int(rng.integers(2) == r.encoding_bit)
    return EveInformation(correct / len(info_rounds), distance)


@dataclass(frozen=True)
class ScanPoint:
    index: int
    family: str
    constrained: bool
    detection_probability: float
    empirical_detection_rate: float
    avg_trace_distance: float
    guess_accuracy: float
    ctrl_rounds: int


def _scan_point(index: int, family: str, spec: AttackSpec, n: int, seed: int) -> ScanPoint:
    from protocol import DEFAULT_DELTA, ProtocolParams, run_protocol

    # thresholds of 1 keep every check phase running so detection is fully observed
    params = ProtocolParams(n=n, delta=DEFAULT_DELTA, p_ctrl_threshold=1.0,
                            p_test_threshold=1.0, seed=seed)
    result = run_protocol(params, spec)
    information = eve_key_information(result.eve, result)
    distance = information.avg_trace_distance
    if spec.kind is AttackKind.MEASURE_RESEND_Z and result.info_rounds:
        # classical knowledge: share of INFO bits whose travel bit Eve measured
        known = sum(1 for r in result.info_rounds
                    if result.eve.rounds.get(r.index, EveRoundRecord(r.index)).measured_bit is not None)
        distance = known / len(result.info_rounds)
    return ScanPoint(
        index=index,
        family=family,
        constrained=family.startswith("constrained") or family == "identity",
        detection_probability=result.detection_probability,
        empirical_detection_rate=result.empirical_detection_rate,
        avg_trace_distance=distance,
        guess_accuracy=information.guess_accuracy,
        ctrl_rounds=len(result.ctrl_rounds),
    )


def robustness_scan(
    samples: int,
    ancilla_qubits: int = DEFAULT_ANCILLA_QUBITS,
    n: int = DEFAULT_SCAN_N,
    seed: int = 0,
    measure_resend_fractions: tuple[float, ...] = (),
) -> list[ScanPoint]:
    """
    Sample return-leg unitaries and chart (detection probability, Eve's distance).

    Point 0 is the identity; the rest cycle through Haar-random unitaries and
    the three constrained families. Optional partial measure-resend points
    follow, one per requested fraction.
    """
    if samples < 1:
        raise ValidationError("robustness scan needs at least one sample")
    points = []
    for i in range(samples):
        family = "identity" if i == 0 else SCAN_FAMILIES[(i - 1) % len(SCAN_FAMILIES)]
        point_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        unitary = family_unitary(family, ancilla_qubits, np.random.default_rng(point_seed))
        spec = AttackSpec.unitary_return(unitary, ancilla_qubits, label=f"unitary-return:family={family}")
        points.append(_scan_point(i, family, spec, n, point_seed))
        logger.debug("scan point %d (%s): %s", i, family, points[-1])
    for j, fraction in enumerate(measure_resend_fractions):
        i = samples + j
        point_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        spec = AttackSpec.measure_resend_z(fraction)
        points.append(_scan_point(i, f"measure-resend-z:{fraction}", spec, n, point_seed))
    logger.info("robustness scan finished: %d points", len(points))
    return points


def scan_frame(points: list[ScanPoint]) -> pd.DataFrame:
    return pd.DataFrame([vars(p) for p in points])
