import math

import numpy as np
import pytest

from evoq.gates import GateKind, gate
from evoq.problems import (
    TELEPORT_CORRECTIONS,
    FitnessCase,
    and_or_cases,
    decision_correct_probability,
    deutsch_cases,
    deutsch_jozsa_cases,
    entanglement_target,
    grover_closed_form,
    grover_reference,
    grover_success_probability,
    majority_on_cases,
    make_problem,
    marked_oracle,
    teleport,
)
from evoq.program import LinearProgram, evaluate
from evoq.qstate import basis_state, random_state


def test_deutsch_cases():
    cases = deutsch_cases()
    assert [c.oracle.truth_table for c in cases] == [(0, 0), (1, 1), (0, 1), (1, 0)]
    assert [c.label for c in cases] == [0, 0, 1, 1]
    assert all(c.initial_state.num_qubits == 2 for c in cases)


@pytest.mark.parametrize("m,count", [(1, 4), (2, 8), (3, 72)])
def test_deutsch_jozsa_case_counts(m, count):
    cases = deutsch_jozsa_cases(m)
    assert len(cases) == count
    for c in cases:
        ones = sum(c.oracle.truth_table)
        assert (ones in (0, 2**m)) == (c.label == 0)
        assert ones in (0, 2**m, 2 ** (m - 1))


def test_majority_on_labels():
    strict = majority_on_cases(2)
    geq = majority_on_cases(2, tie="geq")
    assert len(strict) == 16
    for s, g in zip(strict, geq):
        ones = sum(s.oracle.truth_table)
        assert s.label == int(ones >= 3)
        assert g.label == int(ones >= 2)
    with pytest.raises(ValueError):
        majority_on_cases(2, tie="coin")


def test_and_or_labels():
    for c in and_or_cases():
        t = c.oracle.truth_table
        assert c.label == ((t[0] or t[1]) and (t[2] or t[3]))


def test_fitness_case_needs_one_expectation():
    with pytest.raises(ValueError):
        FitnessCase(basis_state(1, 0))
    with pytest.raises(ValueError):
        FitnessCase(basis_state(1, 0), label=1, target=basis_state(1, 0))


def test_make_problem():
    d = make_problem({"name": "deutsch"})
    assert d.num_qubits == 2 and d.oracle_qubits == (0, 1) and d.classical_queries == 2
    dj = make_problem({"name": "deutsch_jozsa", "m": 3})
    assert dj.classical_queries == 5 and dj.num_qubits == 4
    e = make_problem({"name": "entanglement", "n": 3})
    assert not e.is_decision and GateKind.WIRE in e.gate_set
    with pytest.raises(ValueError):
        make_problem({"name": "sorting"})
    with pytest.raises(ValueError):
        make_problem({"name": "deutsch", "answer_qubit": 5})


def test_entanglement_target():
    s = entanglement_target(3)
    assert np.isclose(s.amplitudes[0], 1 / math.sqrt(2)) and np.isclose(s.amplitudes[7], 1 / math.sqrt(2))


def test_deutsch_reference_algorithm():
    p = LinearProgram(2, (gate("X", 1), gate("H", 0), gate("H", 1), gate("ORACLE", 0, 1), gate("H", 0)))
    for c in deutsch_cases():
        r = evaluate(p, c.initial_state, c.oracle)
        assert decision_correct_probability(r, 0, c.label) == pytest.approx(1.0, abs=1e-12)
        assert r.expected_oracle_calls == 1


def test_teleport_every_branch(rng):
    for _ in range(20):
        a, b = random_state(1, rng).amplitudes
        branches = teleport(a, b)
        assert sorted(br.bits for br in branches) == ["00", "01", "10", "11"]
        assert sum(br.probability for br in branches) == pytest.approx(1.0)
        for br in branches:
            assert br.alice_in_basis
            assert br.probability == pytest.approx(0.25)
            assert br.fidelity == pytest.approx(1.0, abs=1e-10)
        before = {br.bits: br.bob_before.amplitudes for br in branches}
        assert np.allclose(before["00"], [a, b])
        assert np.allclose(before["01"], [b, a])
        assert np.allclose(before["10"], [a, -b])
        assert np.allclose(before["11"], [-b, a])
    assert TELEPORT_CORRECTIONS["01"] is GateKind.X


def test_grover_examples():
    assert grover_success_probability(2, 1, 1) == pytest.approx(1.0, abs=1e-12)
    assert grover_success_probability(4, 9, 3) == pytest.approx(0.96131897, abs=1e-8)
    for m in range(1, 5):
        for k in range(6):
            assert grover_success_probability(m, 2**m - 1, k) == pytest.approx(grover_closed_form(m, k), abs=1e-9)


def test_grover_validation():
    with pytest.raises(ValueError):
        grover_reference(2, 4, 1)
    with pytest.raises(ValueError):
        marked_oracle(2, -1)
