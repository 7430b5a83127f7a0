"""
Error correction and privacy amplification for the INFO string.

Reconciliation: Alice publishes s parities of seeded random subsets of her
bits; Bob searches error patterns of weight <= 2 for one matching the
syndrome difference, and the parties confirm the corrected string.
The confirmation is idealized: success is decided by comparing against
Alice's string directly, so leaked_bits counts the s syndrome bits only.
Privacy amplification: seeded binary Toeplitz hashing over GF(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from errors import ArgumentError

MAX_CORRECTABLE_WEIGHT = 2


@dataclass(frozen=True)
class ReconciliationConfig:
    parity_matrix_seed: int
    syndrome_length: int

    def __post_init__(self):
        if self.syndrome_length < 0:
            raise ArgumentError(f"syndrome length must be >= 0 (got {self.syndrome_length})")


@dataclass(frozen=True)
class PaConfig:
    hash_seed: int
    output_length: int
    seed_bits: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.output_length < 0:
            raise ArgumentError(f"output length must be >= 0 (got {self.output_length})")


@dataclass(frozen=True)
class ReconciliationResult:
    corrected: tuple[int, ...] | None
    leaked_bits: int
    success: bool
    error_weight: int | None = None


def _bits(values: Sequence[int], name: str = "bits") -> np.ndarray:
    array = np.asarray(values, dtype=np.int64).reshape(-1)
    if np.any((array != 0) & (array != 1)):
        raise ArgumentError(f"{name} must contain only 0 and 1")
    return array


def parity_matrix(cfg: ReconciliationConfig, n: int) -> np.ndarray:
    """s x n matrix whose rows are the random subsets Alice publishes parities of"""
    rng = np.random.default_rng(cfg.parity_matrix_seed)
    return rng.integers(0, 2, size=(cfg.syndrome_length, n), dtype=np.int64)


def syndrome(bits: Sequence[int], matrix: np.ndarray) -> np.ndarray:
    return (matrix @ _bits(bits)) % 2


def _find_error_pattern(columns: np.ndarray, difference: np.ndarray) -> np.ndarray | None:
    """Lowest-weight pattern e (weight <= 2) with H e = difference, first in index order"""
    n = columns.shape[0]
    pattern = np.zeros(n, dtype=np.int64)
    if not difference.any():
        return pattern
    hits = np.flatnonzero((columns == difference).all(axis=1))
    if hits.size:
        pattern[hits[0]] = 1
        return pattern
    for i in range(n - 1):
        pairs = np.flatnonzero(((columns[i + 1:] ^ columns[i]) == difference).all(axis=1))
        if pairs.size:
            pattern[[i, i + 1 + pairs[0]]] = 1
            return pattern
    return None


def reconcile(
    alice_info: Sequence[int], bob_info: Sequence[int], cfg: ReconciliationConfig
) -> ReconciliationResult:
    alice, bob = _bits(alice_info, "alice_info"), _bits(bob_info, "bob_info")
    if len(alice) != len(bob):
        raise ArgumentError(f"INFO strings differ in length: {len(alice)} vs {len(bob)}")
    if cfg.syndrome_length > len(alice):
        raise ArgumentError(
            f"syndrome length {cfg.syndrome_length} exceeds INFO length {len(alice)}"
        )
    matrix = parity_matrix(cfg, len(alice))
    difference = (syndrome(alice, matrix) + syndrome(bob, matrix)) % 2
    pattern = _find_error_pattern(matrix.T, difference)
    if pattern is None:
        return ReconciliationResult(None, cfg.syndrome_length, False)
    corrected = bob ^ pattern
    # verification: a decode that lands on the wrong string counts as failure
    if not np.array_equal(corrected, alice):
        return ReconciliationResult(None, cfg.syndrome_length, False, int(pattern.sum()))
    return ReconciliationResult(tuple(corrected.tolist()), cfg.syndrome_length, True, int(pattern.sum()))


def toeplitz_seed_bits(cfg: PaConfig, n: int) -> np.ndarray:
    """The n + m - 1 bits defining the Toeplitz matrix (announced by Alice)"""
    length = n + cfg.output_length - 1
    if cfg.seed_bits is not None:
        bits = _bits(cfg.seed_bits, "seed_bits")
        if len(bits) != length:
            raise ArgumentError(f"Toeplitz seed needs {length} bits, got {len(bits)}")
        return bits
    return np.random.default_rng(cfg.hash_seed).integers(0, 2, size=length, dtype=np.int64)


def toeplitz_matrix(seed_bits: np.ndarray, m: int, n: int) -> np.ndarray:
    """T[i, j] = seed[i - j + n - 1]: constant along every descending diagonal"""
    index = np.arange(m)[:, None] - np.arange(n)[None, :] + n - 1
    return seed_bits[index]


def privacy_amplify(key: Sequence[int], cfg: PaConfig) -> tuple[int, ...]:
    bits = _bits(key, "key")
    n, m = len(bits), cfg.output_length
    if m > n:
        raise ArgumentError(f"output length {m} exceeds key length {n}")
    if m == 0:
        return ()
    matrix = toeplitz_matrix(toeplitz_seed_bits(cfg, n), m, n)
    return tuple(((matrix @ bits) % 2).tolist())


def final_key_length(n: int, leaked_bits: int, security_margin: int | None = None) -> int:
    """m = n - leaked - margin (margin defaults to ceil(n/8)), never negative"""
    margin = math.ceil(n / 8) if security_margin is None else security_margin
    return max(n - leaked_bits - margin, 0)
