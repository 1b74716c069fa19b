"""Gate library: unitary matrices and their embedding into a register.

A :class:`GateApplication` is the three-tuple ``{gate, [params], qubits}``.
Operands are ordered controls first, target last; operand ``qubits[0]`` is the
most significant bit of the gate's local basis index.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qstate import StateError, StateVector

UNITARY_TOL = 1e-10
MAX_GATE_ARITY = 3
# registers up to this size apply gates through a cached full-size unitary
EMBED_CACHE_MAX_QUBITS = 6
DEFAULT_ROT_STEP = math.pi / 8


class GateKind(enum.Enum):
    I = "I"
    X = "X"
    H = "HADAMARD"
    CNOT = "CNOT"
    TOFFOLI = "TOFFOLI"
    PHASE = "PHASE"
    PI8 = "PI8"
    ROT = "ROT"
    CORR10 = "SWAP-CORRECTION-10"
    CORR11 = "SWAP-CORRECTION-11"
    MEASURE = "MEASURE"
    ORACLE = "ORACLE"
    WIRE = "WIRE"
    # 2|0><0| - I on its operands; the Grover conditional phase shift
    PHASESHIFT = "PHASESHIFT"

    @classmethod
    def parse(cls, name: str) -> "GateKind":
        key = name.strip().upper()
        try:
            return cls(key)
        except ValueError:
            pass
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown gate name {name!r}") from None

    @property
    def arity(self) -> int | None:
        """Fixed operand count, or None for register-wide kinds."""
        return _ARITY.get(self)

    @property
    def param_count(self) -> int:
        return 1 if self is GateKind.ROT else 0

    @property
    def is_matrix(self) -> bool:
        return self not in (GateKind.MEASURE, GateKind.ORACLE, GateKind.PHASESHIFT)


_ARITY = {
    GateKind.CNOT: 2,
    GateKind.TOFFOLI: 3,
    GateKind.ORACLE: None,
    GateKind.PHASESHIFT: None,
}
for _k in GateKind:
    _ARITY.setdefault(_k, 1)


class GateError(ValueError):
    pass


@dataclass(frozen=True)
class GateApplication:
    kind: GateKind
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(set(self.qubits)) != len(self.qubits):
            raise GateError(f"{self.kind.value}: duplicate qubit indices {self.qubits}")
        arity = self.kind.arity
        if arity is not None and len(self.qubits) != arity:
            raise GateError(
                f"{self.kind.value} acts on {arity} qubit(s), got {len(self.qubits)}"
            )
        if not self.qubits:
            raise GateError(f"{self.kind.value}: no operands")
        if len(self.params) != self.kind.param_count:
            raise GateError(
                f"{self.kind.value} takes {self.kind.param_count} parameter(s), "
                f"got {len(self.params)}"
            )

    def check_range(self, n: int) -> None:
        for q in self.qubits:
            if not 0 <= q < n:
                raise GateError(f"{self.kind.value}: qubit {q} out of range for {n} qubits")

    @property
    def arity(self) -> int:
        return len(self.qubits)


def gate(kind: GateKind | str, *qubits: int, params=()) -> GateApplication:
    """Shorthand: ``gate("CNOT", 0, 1)``."""
    if isinstance(kind, str):
        kind = GateKind.parse(kind)
    return GateApplication(kind, tuple(qubits), tuple(params))


_S2 = 1 / math.sqrt(2)
_FIXED = {
    GateKind.I: np.eye(2, dtype=complex),
    GateKind.WIRE: np.eye(2, dtype=complex),
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.H: np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    GateKind.PHASE: np.diag([1, 1j]).astype(complex),
    GateKind.PI8: np.diag([1, np.exp(1j * math.pi / 4)]).astype(complex),
    GateKind.CORR10: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.CORR11: np.array([[0, 1], [-1, 0]], dtype=complex),
}
_cnot = np.eye(4, dtype=complex)
_cnot[2:, 2:] = [[0, 1], [1, 0]]
_FIXED[GateKind.CNOT] = _cnot
_toffoli = np.eye(8, dtype=complex)
_toffoli[6:, 6:] = [[0, 1], [1, 0]]
_FIXED[GateKind.TOFFOLI] = _toffoli
for _m in _FIXED.values():
    _m.setflags(write=False)


def standard_matrix(kind: GateKind, params=()) -> np.ndarray:
    params = tuple(params)
    if not kind.is_matrix:
        raise GateError(f"{kind.value} has no fixed matrix")
    if len(params) != kind.param_count:
        raise GateError(
            f"{kind.value} takes {kind.param_count} parameter(s), got {len(params)}"
        )
    if kind is GateKind.ROT:
        t = params[0]
        return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]], dtype=complex)
    return _FIXED[kind]


def phase_shift_matrix(k: int) -> np.ndarray:
    m = -np.eye(2**k, dtype=complex)
    m[0, 0] = 1.0
    return m


def is_unitary(m, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise GateError(f"expected a square matrix, got shape {m.shape}")
    dim = m.shape[0]
    if dim < 1 or dim & (dim - 1):
        raise GateError(f"matrix dimension {dim} is not a power of two")
    return bool(np.max(np.abs(m @ m.conj().T - np.eye(dim))) <= tol)


def rot_angles(step: float = DEFAULT_ROT_STEP) -> list[float]:
    count = max(1, int(round(2 * math.pi / step)))
    return [k * step for k in range(count)]


def is_adjacent(qubits) -> bool:
    """True when the operands occupy a contiguous block of wires."""
    qs = sorted(qubits)
    return qs[-1] - qs[0] == len(qs) - 1


def apply_matrix_block(block: np.ndarray, matrix: np.ndarray, qubits, n: int) -> np.ndarray:
    """Apply a 2^k x 2^k matrix on ``qubits`` to every column of ``block``.

    ``block`` has shape ``(2**n,)`` or ``(2**n, C)``.
    """
    qubits = tuple(qubits)
    k = len(qubits)
    single = block.ndim == 1
    cols = 1 if single else block.shape[1]
    t = block.reshape((2,) * n + (cols,))
    t = np.moveaxis(t, qubits, tuple(range(k)))
    moved_shape = t.shape
    t = (matrix @ t.reshape(2**k, -1)).reshape(moved_shape)
    t = np.moveaxis(t, tuple(range(k)), qubits)
    out = t.reshape(2**n, cols)
    return out[:, 0] if single else out


@lru_cache(maxsize=8192)
def embedded_matrix(kind: GateKind, qubits: tuple[int, ...], params: tuple[float, ...], n: int) -> np.ndarray:
    """Full 2^n x 2^n operator of a matrix gate (identity elsewhere)."""
    if kind is GateKind.PHASESHIFT:
        small = phase_shift_matrix(len(qubits))
    else:
        small = standard_matrix(kind, params)
    full = apply_matrix_block(np.eye(2**n, dtype=complex), small, qubits, n)
    full.setflags(write=False)
    return full


def apply_to_block(block: np.ndarray, app: GateApplication, n: int) -> np.ndarray:
    """Apply a non-measurement, non-oracle gate to raw amplitudes."""
    kind = app.kind
    if kind is GateKind.WIRE or kind is GateKind.I:
        return block
    if kind is GateKind.MEASURE or kind is GateKind.ORACLE:
        raise GateError(f"{kind.value} is applied at program level")
    if n <= EMBED_CACHE_MAX_QUBITS:
        return embedded_matrix(kind, app.qubits, app.params, n) @ block
    if kind is GateKind.PHASESHIFT:
        small = phase_shift_matrix(len(app.qubits))
    else:
        small = standard_matrix(kind, app.params)
    return apply_matrix_block(block, small, app.qubits, n)


def _check_app(s: StateVector, qubits) -> None:
    n = s.num_qubits
    if len(set(qubits)) != len(qubits):
        raise GateError(f"duplicate qubit indices {tuple(qubits)}")
    for q in qubits:
        if not 0 <= q < n:
            raise GateError(f"qubit {q} out of range for {n} qubits")


def apply(s: StateVector, app: GateApplication) -> StateVector:
    _check_app(s, app.qubits)
    return StateVector._trusted(apply_to_block(s.amplitudes, app, s.num_qubits))


def apply_matrix(s: StateVector, matrix, qubits) -> StateVector:
    """Apply an arbitrary unitary (e.g. a gate inverse) on ``qubits``."""
    qubits = tuple(qubits)
    _check_app(s, qubits)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (2 ** len(qubits),) * 2:
        raise GateError(f"matrix shape {matrix.shape} does not fit {len(qubits)} qubit(s)")
    if not is_unitary(matrix):
        raise StateError("refusing to apply a non-unitary matrix")
    return StateVector._trusted(apply_matrix_block(s.amplitudes, matrix, qubits, s.num_qubits))


def inverse_matrix(app: GateApplication) -> np.ndarray:
    if app.kind is GateKind.PHASESHIFT:
        return phase_shift_matrix(app.arity)
    return standard_matrix(app.kind, app.params).conj().T


MATRIX_KINDS = tuple(k for k in GateKind if k.is_matrix)
