"""Benchmark problems and analytic reference circuits.

Oracle problems use a register of ``m`` input qubits (0..m-1), one workspace
qubit (m) and optional ancillas after it. The answer is read from
``answer_qubit`` (qubit 0 unless configured otherwise).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .gates import GateApplication, GateKind, apply, gate
from .program import EvaluationResult, LinearProgram, eval_linear
from .qstate import StateVector, basis_state, fidelity, tensor


@dataclass(frozen=True)
class Oracle:
    """Black-box boolean function ``f`` on ``input_bits`` bits, as a truth table."""

    input_bits: int
    truth_table: tuple[int, ...]

    def __post_init__(self):
        table = tuple(int(v) for v in self.truth_table)
        if len(table) != 2**self.input_bits:
            raise ValueError(
                f"truth table has {len(table)} entries, expected {2**self.input_bits}"
            )
        if any(v not in (0, 1) for v in table):
            raise ValueError("truth table entries must be 0 or 1")
        object.__setattr__(self, "truth_table", table)

    def __call__(self, x: int) -> int:
        return self.truth_table[x]

    @property
    def ones(self) -> int:
        return sum(self.truth_table)


@dataclass(frozen=True)
class FitnessCase:
    """One scored input: an initial state, an optional oracle, and what counts as correct.

    Decision problems set ``label`` (the expected answer-qubit value);
    state-preparation problems set ``target``.
    """

    initial_state: StateVector
    oracle: Oracle | None = None
    label: int | None = None
    target: StateVector | None = None

    def __post_init__(self):
        if (self.label is None) == (self.target is None):
            raise ValueError("a fitness case needs exactly one of label or target")

    def correct(self, observed) -> bool:
        if self.label is not None:
            return int(observed) == self.label
        return fidelity(observed, self.target) >= 1 - 1e-9


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    num_qubits: int
    gate_set: tuple[GateKind, ...]
    cases: tuple[FitnessCase, ...]
    answer_qubit: int | None = None
    oracle_qubits: tuple[int, ...] | None = None
    scalable: bool = False
    classical_queries: int | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cases:
            raise ValueError(f"problem {self.name!r} has no fitness cases")
        for case in self.cases:
            if case.initial_state.num_qubits != self.num_qubits:
                raise ValueError("all fitness cases must share the register size")
        if GateKind.ORACLE in self.gate_set and self.oracle_qubits is None:
            raise ValueError("ORACLE in the gate set requires oracle qubits")

    @property
    def is_decision(self) -> bool:
        return self.cases[0].label is not None

    @cached_property
    def init_block(self) -> np.ndarray:
        return np.stack([c.initial_state.amplitudes for c in self.cases], axis=1)

    @cached_property
    def oracles(self) -> tuple[Oracle, ...] | None:
        if all(c.oracle is None for c in self.cases):
            return None
        return tuple(c.oracle for c in self.cases)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([c.label for c in self.cases])

    @cached_property
    def target_block(self) -> np.ndarray:
        return np.stack([c.target.amplitudes for c in self.cases], axis=1)

    def to_config(self) -> dict:
        return dict(self.config)


# --------------------------------------------------------------------------
# fitness-case generators


def _oracle_cases(tables, labels, m: int, n: int) -> list[FitnessCase]:
    init = basis_state(n, 0)
    return [
        FitnessCase(init, Oracle(m, table), label=int(label))
        for table, label in zip(tables, labels)
    ]


def deutsch_jozsa_cases(m: int, extra_qubits: int = 0) -> list[FitnessCase]:
    """Both constant oracles (label 0) and every balanced oracle (label 1)."""
    if not 1 <= m <= 4:
        raise ValueError(f"Deutsch-Jozsa input bits must be in 1..4, got {m}")
    size = 2**m
    tables = [(0,) * size, (1,) * size]
    balanced = []
    for ones in itertools.combinations(range(size), size // 2):
        row = [0] * size
        for i in ones:
            row[i] = 1
        balanced.append(tuple(row))
    tables += sorted(balanced)
    labels = [0, 0] + [1] * len(balanced)
    return _oracle_cases(tables, labels, m, m + 1 + extra_qubits)


def deutsch_cases(extra_qubits: int = 0) -> list[FitnessCase]:
    """f=0, f=1 (uniform, label 0) and f=id, f=not (balanced, label 1)."""
    return deutsch_jozsa_cases(1, extra_qubits)


def majority_on_cases(m: int, tie: str = "strict", extra_qubits: int = 0) -> list[FitnessCase]:
    """Every boolean function of ``m`` bits, labelled 1 when most outputs are 1.

    ``tie="strict"`` labels an exact half 0; ``tie="geq"`` labels it 1.
    """
    if not 1 <= m <= 3:
        raise ValueError(f"majority-on input bits must be in 1..3, got {m}")
    if tie not in ("strict", "geq"):
        raise ValueError(f"tie rule must be 'strict' or 'geq', got {tie!r}")
    size = 2**m
    tables = list(itertools.product((0, 1), repeat=size))
    if tie == "strict":
        labels = [sum(t) * 2 > size for t in tables]
    else:
        labels = [sum(t) * 2 >= size for t in tables]
    return _oracle_cases(tables, labels, m, m + 1 + extra_qubits)


def and_or_cases(extra_qubits: int = 0) -> list[FitnessCase]:
    """All 16 two-bit functions, labelled by (f(0) or f(1)) and (f(2) or f(3))."""
    tables = list(itertools.product((0, 1), repeat=4))
    labels = [(t[0] | t[1]) & (t[2] | t[3]) for t in tables]
    return _oracle_cases(tables, labels, 2, 3 + extra_qubits)


def entanglement_target(n: int) -> StateVector:
    """(|0...0> + |1...1>) / sqrt(2)."""
    if not 2 <= n <= 5:
        raise ValueError(f"entanglement target supports 2..5 qubits, got {n}")
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = 1 / math.sqrt(2)
    return StateVector(amps)


DEFAULT_ORACLE_GATES = ("HADAMARD", "X", "CNOT", "ORACLE")
DEFAULT_ENTANGLEMENT_GATES = ("HADAMARD", "CNOT", "X", "WIRE")

PROBLEMS = ("deutsch", "deutsch_jozsa", "majority_on", "and_or", "entanglement")


def make_problem(cfg: dict) -> ProblemSpec:
    """Build a problem from its config block, e.g. ``{"name": "deutsch"}``."""
    cfg = dict(cfg)
    name = cfg.get("name")
    extra = int(cfg.get("extra_qubits", 0))
    if name == "entanglement":
        n = int(cfg.get("n", 2))
        cases = [FitnessCase(basis_state(n, 0), target=entanglement_target(n))]
        gate_names = cfg.get("gate_set", DEFAULT_ENTANGLEMENT_GATES)
        gate_set = tuple(GateKind.parse(g) for g in gate_names)
        return ProblemSpec(name, n, gate_set, tuple(cases), scalable=True, config=cfg)

    if name == "deutsch":
        m, cases, classical, scalable = 1, deutsch_cases(extra), 2, False
    elif name == "deutsch_jozsa":
        m = int(cfg.get("m", 2))
        cases, classical, scalable = deutsch_jozsa_cases(m, extra), 2 ** (m - 1) + 1, True
    elif name == "majority_on":
        m = int(cfg.get("m", 1))
        # strict majority is evasive: a deterministic classical decider reads every output
        cases, classical, scalable = majority_on_cases(m, cfg.get("tie", "strict"), extra), 2**m, True
    elif name == "and_or":
        m, cases, classical, scalable = 2, and_or_cases(extra), 4, False
    else:
        raise ValueError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEMS)}")
    n = m + 1 + extra
    answer = int(cfg.get("answer_qubit", 0))
    if not 0 <= answer < n:
        raise ValueError(f"answer qubit {answer} out of range for {n} qubits")
    gate_set = tuple(GateKind.parse(g) for g in cfg.get("gate_set", DEFAULT_ORACLE_GATES))
    return ProblemSpec(
        name, n, gate_set, tuple(cases),
        answer_qubit=answer,
        oracle_qubits=tuple(range(m + 1)),
        scalable=scalable,
        classical_queries=classical,
        config=cfg,
    )


# --------------------------------------------------------------------------
# reference algorithms


TELEPORT_CORRECTIONS = {
    "00": GateKind.I,
    "01": GateKind.X,
    "10": GateKind.CORR10,
    "11": GateKind.CORR11,
}


def teleport_reference() -> tuple[LinearProgram, dict[str, GateKind]]:
    """Alice holds qubits 0 (the message) and 1; Bob holds qubit 2."""
    prog = LinearProgram(3, (gate("H", 1), gate("CNOT", 1, 2), gate("CNOT", 0, 1), gate("H", 0)))
    return prog, dict(TELEPORT_CORRECTIONS)


@dataclass(frozen=True)
class TeleportBranch:
    bits: str
    probability: float
    bob_before: StateVector
    bob_after: StateVector
    fidelity: float
    alice_in_basis: bool


def _bob_qubit(state: StateVector, a: int, b: int) -> tuple[StateVector, bool]:
    amps = state.amplitudes.reshape(2, 2, 2)
    bob = amps[a, b, :]
    mass = float(np.vdot(bob, bob).real)
    return StateVector.from_amplitudes(bob, normalize=True), abs(mass - 1.0) < 1e-10


def teleport(alpha: complex, beta: complex) -> list[TeleportBranch]:
    """Run the full protocol exactly and report every measurement branch."""
    message = StateVector.from_amplitudes([alpha, beta])
    prog, corrections = teleport_reference()
    measured = LinearProgram(3, prog.gates + (gate("MEASURE", 0), gate("MEASURE", 1)))
    result = eval_linear(measured, tensor(message, basis_state(2, 0)))
    out = []
    for br in result.branches:
        bits = dict(br.bits)
        key = f"{bits[0]}{bits[1]}"
        before, in_basis = _bob_qubit(br.state, bits[0], bits[1])
        fixed = apply(br.state, GateApplication(corrections[key], (2,)))
        after, _ = _bob_qubit(fixed, bits[0], bits[1])
        out.append(TeleportBranch(key, br.probability, before, after, fidelity(after, message), in_basis))
    return out


def marked_oracle(m: int, marked: int) -> Oracle:
    if not 0 <= marked < 2**m:
        raise ValueError(f"marked index {marked} out of range for {m} bits")
    return Oracle(m, tuple(int(x == marked) for x in range(2**m)))


def grover_reference(m: int, marked: int, iterations: int) -> LinearProgram:
    """H on every qubit, then ``iterations`` Grover operators.

    The oracle step is a phase oracle (ORACLE on exactly the ``m`` search
    qubits); evaluate with :func:`marked_oracle`.
    """
    if m < 1:
        raise ValueError("Grover search needs at least one qubit")
    if not 0 <= marked < 2**m:
        raise ValueError(f"marked index {marked} out of range for {m} bits")
    if iterations < 0:
        raise ValueError("iteration count must be >= 0")
    qubits = tuple(range(m))
    hadamards = tuple(gate("H", q) for q in qubits)
    step = (
        (GateApplication(GateKind.ORACLE, qubits),)
        + hadamards
        + (GateApplication(GateKind.PHASESHIFT, qubits),)
        + hadamards
    )
    return LinearProgram(m, hadamards + step * iterations)


def grover_success_probability(m: int, marked: int, iterations: int) -> float:
    prog = grover_reference(m, marked, iterations)
    result = eval_linear(prog, basis_state(m, 0), marked_oracle(m, marked))
    return float(result.basis_probabilities()[marked])


def grover_closed_form(m: int, iterations: int) -> float:
    theta = math.asin(2 ** (-m / 2))
    return math.sin((2 * iterations + 1) * theta) ** 2


def decision_correct_probability(result: EvaluationResult, answer_qubit: int, label: int) -> float:
    """Probability that reading ``answer_qubit`` at the end yields ``label``."""
    total = 0.0
    for br in result.branches:
        n = br.state.num_qubits
        if not 0 <= answer_qubit < n:
            raise ValueError(f"answer qubit {answer_qubit} out of range for {n} qubits")
        bits = (np.arange(br.state.dim) >> (n - 1 - answer_qubit)) & 1
        total += br.probability * float(br.state.probabilities()[bits == label].sum())
    return total
