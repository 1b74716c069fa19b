"""Dense state vectors for small qubit registers.

Qubit 0 is the leftmost symbol of a ket and the most significant bit of the
basis index, so ``|q0 q1 ... q(n-1)>`` has index ``q0 * 2**(n-1) + ...``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-10
SEPARABILITY_TOL = 1e-9
FIDELITY_TOL = 1e-9
DEFAULT_MAX_QUBITS = 16
# measurement branches at or below this probability are dropped
ZERO_PROB = 1e-20


def max_qubits() -> int:
    """Register cap; ``EVOQ_MAX_QUBITS`` overrides the default of 16."""
    raw = os.environ.get("EVOQ_MAX_QUBITS")
    if raw is None:
        return DEFAULT_MAX_QUBITS
    value = int(raw)
    if value < 1:
        raise ValueError(f"EVOQ_MAX_QUBITS must be >= 1, got {value}")
    return value


class StateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StateVector:
    """Immutable, normalized amplitude vector of an n-qubit register."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        dim = amps.shape[0]
        if dim < 2 or dim & (dim - 1):
            raise StateError(f"amplitude count {dim} is not a power of two >= 2")
        n = dim.bit_length() - 1
        if n > max_qubits():
            raise StateError(f"{n} qubits exceeds the register cap of {max_qubits()}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"state is not normalized (sum |a|^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def _trusted(cls, amps: np.ndarray) -> "StateVector":
        # skips validation; callers guarantee shape and norm
        obj = object.__new__(cls)
        amps = np.asarray(amps, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(obj, "amplitudes", amps)
        return obj

    @classmethod
    def from_amplitudes(cls, amps, normalize: bool = False) -> "StateVector":
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise StateError("cannot normalize the zero vector")
            amps = amps / norm
        return cls(amps)

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.shape[0].bit_length() - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def allclose(self, other: "StateVector", atol: float = 1e-12) -> bool:
        """Raw amplitude equality (global phase matters)."""
        return self.dim == other.dim and bool(
            np.allclose(self.amplitudes, other.amplitudes, atol=atol, rtol=0)
        )

    def ket(self, precision: int = 4) -> str:
        n = self.num_qubits
        terms = []
        for k, a in enumerate(self.amplitudes):
            if abs(a) > 10 ** -(precision + 1):
                terms.append(f"({a.real:.{precision}f}{a.imag:+.{precision}f}j)|{k:0{n}b}>")
        return " + ".join(terms)

    def __repr__(self):
        return f"StateVector({self.ket()})"


@dataclass(frozen=True)
class MeasurementOutcome:
    observed_bits: str
    probability: float
    post_state: StateVector


def qubit_bit(index: int, qubit: int, n: int) -> int:
    return (index >> (n - 1 - qubit)) & 1


def basis_state(n: int, k: int) -> StateVector:
    if n < 1:
        raise StateError(f"qubit count must be >= 1, got {n}")
    if not 0 <= k < 2**n:
        raise StateError(f"basis index {k} out of range for {n} qubits")
    amps = np.zeros(2**n, dtype=complex)
    amps[k] = 1.0
    return StateVector(amps)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """``a ⊗ b``; ``result[i * 2**b.n + j] = a[i] * b[j]``."""
    n = a.num_qubits + b.num_qubits
    if n > max_qubits():
        raise StateError(f"{n} qubits exceeds the register cap of {max_qubits()}")
    return StateVector._trusted(np.kron(a.amplitudes, b.amplitudes))


def _check_normalized(s: StateVector) -> None:
    norm = float(np.sum(np.abs(s.amplitudes) ** 2))
    if norm == 0.0 or abs(norm - 1.0) > NORM_TOL:
        raise StateError(f"cannot measure a state with total probability {norm!r}")


def measure_all(s: StateVector, rng: np.random.Generator) -> MeasurementOutcome:
    _check_normalized(s)
    probs = s.probabilities()
    k = int(rng.choice(s.dim, p=probs / probs.sum()))
    n = s.num_qubits
    return MeasurementOutcome(f"{k:0{n}b}", float(probs[k]), basis_state(n, k))


def _projection(amps: np.ndarray, qubit: int, n: int, bit: int):
    shaped = amps.reshape((2,) * n)
    idx = [slice(None)] * n
    idx[qubit] = 1 - bit
    projected = shaped.copy()
    projected[tuple(idx)] = 0.0
    projected = projected.reshape(-1)
    prob = float(np.vdot(projected, projected).real)
    return prob, projected


def branch_measure(s: StateVector, q: int) -> list[tuple[int, float, StateVector]]:
    """Both outcomes of measuring qubit ``q``, zero-probability branches dropped."""
    n = s.num_qubits
    if not 0 <= q < n:
        raise StateError(f"qubit {q} out of range for {n} qubits")
    branches = []
    for bit in (0, 1):
        prob, projected = _projection(s.amplitudes, q, n, bit)
        if prob > ZERO_PROB:
            branches.append((bit, prob, StateVector._trusted(projected / np.sqrt(prob))))
    return branches


def measure_qubit(s: StateVector, q: int, rng: np.random.Generator) -> MeasurementOutcome:
    _check_normalized(s)
    branches = branch_measure(s, q)
    if len(branches) == 1:
        bit, prob, post = branches[0]
    else:
        p1 = branches[1][1] / (branches[0][1] + branches[1][1])
        bit, prob, post = branches[1] if rng.random() < p1 else branches[0]
    return MeasurementOutcome(str(bit), prob, post)


def is_entangled_pair(s: StateVector, tol: float = SEPARABILITY_TOL) -> bool:
    # a two-qubit state factors iff its 2x2 coefficient matrix has rank 1
    if s.num_qubits != 2:
        raise StateError(f"expected a 2-qubit state, got {s.num_qubits} qubits")
    d0, d1, d2, d3 = s.amplitudes
    return abs(d0 * d3 - d1 * d2) > tol


def fidelity(a: StateVector, b: StateVector) -> float:
    if a.dim != b.dim:
        raise StateError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def random_state(n: int, rng: np.random.Generator) -> StateVector:
    """Haar-random pure state."""
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector.from_amplitudes(amps, normalize=True)


def bell_states() -> dict[str, StateVector]:
    r = 1 / np.sqrt(2)
    return {
        "00": StateVector([r, 0, 0, r]),
        "01": StateVector([0, r, r, 0]),
        "10": StateVector([r, 0, 0, -r]),
        "11": StateVector([0, r, -r, 0]),
    }
