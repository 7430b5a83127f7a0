"""
Exact dense statevector simulator for the few-qubit registers of one protocol round.

Conventions:
- qubit 0 is the most significant bit of the amplitude index
- within an EPR pair the home qubit precedes the travel qubit; ancillas follow
- every operation returns a new value; inputs are never mutated
- all sampling draws from an explicit numpy Generator
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import unitary_group

from errors import ArgumentError, InvariantError, SizeError, ValidationError

TOLERANCE = 1e-10
MAX_QUBITS = 12

_SQRT2_INV = 1 / np.sqrt(2)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=complex)
    values.flags.writeable = False
    return values


def _qubit_count(dim: int) -> int:
    if dim < 2 or dim & (dim - 1):
        raise ValidationError(f"dimension {dim} is not a power of two >= 2")
    return dim.bit_length() - 1


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitude vector over a k-qubit register"""

    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = _frozen(self.amplitudes)
        if amplitudes.ndim != 1:
            raise ValidationError("amplitudes must be one-dimensional")
        if _qubit_count(len(amplitudes)) > MAX_QUBITS:
            raise SizeError(f"register exceeds the {MAX_QUBITS}-qubit cap")
        norm = float(np.vdot(amplitudes, amplitudes).real)
        if abs(norm - 1.0) > TOLERANCE:
            raise ValidationError(f"state norm is {norm}, expected 1")
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def num_qubits(self) -> int:
        return _qubit_count(len(self.amplitudes))

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix"""

    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError("density matrix must be square")
        _qubit_count(entries.shape[0])
        if not np.allclose(entries, entries.conj().T, atol=TOLERANCE, rtol=0):
            raise ValidationError("density matrix is not Hermitian")
        trace = np.trace(entries).real
        if abs(trace - 1.0) > TOLERANCE:
            raise ValidationError(f"density matrix trace is {trace}, expected 1")
        if np.linalg.eigvalsh(entries).min() < -TOLERANCE:
            raise ValidationError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", entries)

    @property
    def num_qubits(self) -> int:
        return _qubit_count(self.entries.shape[0])


@dataclass(frozen=True, eq=False)
class Gate:
    """Unitary acting on `arity` qubits; the first target is the most significant"""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValidationError("gate matrix must be square")
        _qubit_count(matrix.shape[0])
        identity = np.eye(matrix.shape[0])
        if not np.allclose(matrix.conj().T @ matrix, identity, atol=TOLERANCE, rtol=0):
            raise ValidationError("gate matrix is not unitary")
        object.__setattr__(self, "matrix", matrix)

    @property
    def arity(self) -> int:
        return _qubit_count(self.matrix.shape[0])


class BellState(Enum):
    PHI_PLUS = "PhiPlus"
    PHI_MINUS = "PhiMinus"
    PSI_PLUS = "PsiPlus"
    PSI_MINUS = "PsiMinus"

    @property
    def vector(self) -> np.ndarray:
        return _BELL_VECTORS[self]


_BELL_VECTORS = {
    BellState.PHI_PLUS: _frozen(np.array([1, 0, 0, 1]) * _SQRT2_INV),
    BellState.PHI_MINUS: _frozen(np.array([1, 0, 0, -1]) * _SQRT2_INV),
    BellState.PSI_PLUS: _frozen(np.array([0, 1, 1, 0]) * _SQRT2_INV),
    BellState.PSI_MINUS: _frozen(np.array([0, 1, -1, 0]) * _SQRT2_INV),
}
BELL_ORDER = tuple(BellState)
_BELL_BASIS = np.array([state.vector for state in BELL_ORDER])

IDENTITY = Gate(np.eye(2))
PAULI_X = Gate(np.array([[0, 1], [1, 0]]))
PAULI_Z = Gate(np.array([[1, 0], [0, -1]]))
HADAMARD = Gate(np.array([[1, 1], [1, -1]]) * _SQRT2_INV)
CNOT = Gate(np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]))


def _check_qubits(num_qubits: int, qubits: Sequence[int]) -> None:
    if len(set(qubits)) != len(qubits):
        raise ArgumentError(f"qubit indices {list(qubits)} are not distinct")
    for q in qubits:
        if not 0 <= q < num_qubits:
            raise ArgumentError(f"qubit index {q} outside register of {num_qubits}")


def _to_front(amplitudes: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Reshape so rows index the given qubits (in order) and columns the rest"""
    tensor = amplitudes.reshape([2] * n)
    tensor = np.moveaxis(tensor, list(qubits), list(range(len(qubits))))
    return tensor.reshape(2 ** len(qubits), -1)


def _from_front(block: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    tensor = block.reshape([2] * n)
    tensor = np.moveaxis(tensor, list(range(len(qubits))), list(qubits))
    return tensor.reshape(-1)


def _sample(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    total = probabilities.sum()
    if abs(total - 1.0) > TOLERANCE:
        raise InvariantError(f"Born probabilities sum to {total}")
    outcome = int(np.searchsorted(np.cumsum(probabilities), rng.random(), side="right"))
    if outcome >= len(probabilities):
        # rounding left the draw above the last cumulative value
        outcome = int(np.flatnonzero(probabilities > 0)[-1])
    return outcome


def make_register(k: int, cap: int = MAX_QUBITS) -> StateVector:
    """Return |0...0> on k qubits"""
    if not 1 <= k <= cap:
        raise SizeError(f"register size {k} outside [1, {cap}]")
    amplitudes = np.zeros(2**k, dtype=complex)
    amplitudes[0] = 1.0
    return StateVector(amplitudes)


def prepare_bell(b: BellState) -> StateVector:
    return StateVector(b.vector)


def prepare_qubit(c: complex, d: complex) -> StateVector:
    """Single qubit c|0> + d|1>"""
    return StateVector(np.array([c, d]))


def preparation_gate(c: complex, d: complex) -> Gate:
    """Unitary taking |0> to c|0> + d|1>"""
    return Gate(np.array([[c, -np.conj(d)], [d, np.conj(c)]]))


def apply_gate(s: StateVector, g: Gate, targets: Sequence[int]) -> StateVector:
    targets = list(targets)
    if len(targets) != g.arity:
        raise ArgumentError(f"gate acts on {g.arity} qubits, got {len(targets)} targets")
    _check_qubits(s.num_qubits, targets)
    block = _to_front(s.amplitudes, targets, s.num_qubits)
    return StateVector(_from_front(g.matrix @ block, targets, s.num_qubits))


def z_probabilities(s: StateVector, q: int) -> np.ndarray:
    """Born probabilities (p0, p1) for a computational-basis measurement of q"""
    _check_qubits(s.num_qubits, [q])
    block = _to_front(s.amplitudes, [q], s.num_qubits)
    return np.sum(np.abs(block) ** 2, axis=1)


def measure_z(s: StateVector, q: int, rng: np.random.Generator) -> tuple[int, StateVector]:
    probabilities = z_probabilities(s, q)
    total = probabilities.sum()
    if abs(total - 1.0) > TOLERANCE:
        raise InvariantError(f"Born probabilities sum to {total}")
    bit = 1 if rng.random() < probabilities[1] else 0
    block = _to_front(s.amplitudes, [q], s.num_qubits)
    collapsed = np.zeros_like(block)
    collapsed[bit] = block[bit] / np.sqrt(probabilities[bit])
    return bit, StateVector(_from_front(collapsed, [q], s.num_qubits))


def reset_qubit(s: StateVector, q: int, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Measure q, then rotate it back to |0>; returns the measured bit"""
    bit, s = measure_z(s, q, rng)
    if bit:
        s = apply_gate(s, PAULI_X, [q])
    return bit, s


def _bell_overlaps(s: StateVector, q1: int, q2: int) -> np.ndarray:
    _check_qubits(s.num_qubits, [q1, q2])
    block = _to_front(s.amplitudes, [q1, q2], s.num_qubits)
    return _BELL_BASIS.conj() @ block


def bell_probabilities(s: StateVector, q1: int, q2: int) -> dict[BellState, float]:
    """Born probabilities of the four Bell projectors on (q1, q2)"""
    weights = np.sum(np.abs(_bell_overlaps(s, q1, q2)) ** 2, axis=1)
    return dict(zip(BELL_ORDER, weights.tolist()))


def bell_measure(
    s: StateVector, q1: int, q2: int, rng: np.random.Generator
) -> tuple[BellState, StateVector]:
    overlaps = _bell_overlaps(s, q1, q2)
    weights = np.sum(np.abs(overlaps) ** 2, axis=1)
    k = _sample(weights, rng)
    outcome = BELL_ORDER[k]
    block = np.outer(outcome.vector, overlaps[k]) / np.sqrt(weights[k])
    return outcome, StateVector(_from_front(block, [q1, q2], s.num_qubits))


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; a's qubits come first"""
    if a.num_qubits + b.num_qubits > MAX_QUBITS:
        raise SizeError(f"combined register exceeds the {MAX_QUBITS}-qubit cap")
    return StateVector(np.kron(a.amplitudes, b.amplitudes))


def dm_of(s: StateVector) -> DensityMatrix:
    return DensityMatrix(np.outer(s.amplitudes, s.amplitudes.conj()))


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on `keep`; kept qubits stay in ascending index order"""
    keep = sorted(set(keep))
    if not keep:
        raise ArgumentError("partial trace needs at least one kept qubit")
    n = rho.num_qubits
    _check_qubits(n, keep)
    tensor_form = rho.entries.reshape([2] * (2 * n))
    remaining = n
    # tracing from the highest index down leaves lower axis positions intact
    for q in sorted(set(range(n)) - set(keep), reverse=True):
        tensor_form = np.trace(tensor_form, axis1=q, axis2=q + remaining)
        remaining -= 1
    dim = 2 ** len(keep)
    return DensityMatrix(tensor_form.reshape(dim, dim))


def reduced_state(s: StateVector, keep: Iterable[int]) -> DensityMatrix:
    return partial_trace(dm_of(s), keep)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.entries.shape != b.entries.shape:
        raise ArgumentError(
            f"dimension mismatch: {a.entries.shape} vs {b.entries.shape}"
        )
    distance = 0.5 * float(np.abs(np.linalg.eigvalsh(a.entries - b.entries)).sum())
    return min(max(distance, 0.0), 1.0)


def haar_unitary(dim: int, rng: np.random.Generator) -> Gate:
    """Haar-random unitary on `dim` amplitudes"""
    return Gate(unitary_group.rvs(dim, random_state=rng))
