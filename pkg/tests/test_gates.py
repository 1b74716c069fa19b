import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import embed_oracle
from evoq.gates import (
    MATRIX_KINDS,
    GateApplication,
    GateError,
    GateKind,
    apply,
    apply_matrix,
    embedded_matrix,
    gate,
    inverse_matrix,
    is_adjacent,
    is_unitary,
    phase_shift_matrix,
    rot_angles,
    standard_matrix,
)
from evoq.qstate import StateError, StateVector, basis_state, random_state

R = 1 / math.sqrt(2)


@pytest.mark.parametrize("src,dst", [(0b00, 0b00), (0b01, 0b01), (0b10, 0b11), (0b11, 0b10)])
def test_cnot_truth_table(src, dst):
    out = apply(basis_state(2, src), gate("CNOT", 0, 1))
    assert np.allclose(out.amplitudes, basis_state(2, dst).amplitudes, atol=1e-12, rtol=0)


def test_hadamard_mapping():
    assert np.allclose(apply(basis_state(1, 0), gate("H", 0)).amplitudes, [R, R], atol=1e-12)
    assert np.allclose(apply(basis_state(1, 1), gate("H", 0)).amplitudes, [R, -R], atol=1e-12)


def test_not_swaps_amplitudes():
    s = StateVector([0.6, 0.8j])
    assert np.allclose(apply(s, gate("X", 0)).amplitudes, [0.8j, 0.6], atol=1e-12)


def test_all_gates_unitary():
    for kind in MATRIX_KINDS:
        for a in (rot_angles() if kind is GateKind.ROT else [None]):
            assert is_unitary(standard_matrix(kind, () if a is None else (a,)), 1e-12), kind
    for k in range(1, 5):
        assert is_unitary(phase_shift_matrix(k), 1e-12)


def test_corrections_undo_teleport_distortions():
    # branch 10 leaves a|0> - b|1>, branch 11 leaves a|1> - b|0>
    a, b = 0.6, 0.8
    m10 = standard_matrix(GateKind.CORR10)
    m11 = standard_matrix(GateKind.CORR11)
    assert np.allclose(m10 @ [a, -b], [a, b])
    assert np.allclose(m11 @ [-b, a], [a, b])


def test_is_unitary_errors():
    assert not is_unitary([[1, 1], [0, 1]])
    with pytest.raises(GateError):
        is_unitary(np.eye(3))
    with pytest.raises(GateError):
        is_unitary(np.ones((2, 4)))


@pytest.mark.parametrize("bad", [
    lambda: gate("CNOT", 0, 0),
    lambda: gate("CNOT", 0),
    lambda: gate("ROT", 0),
    lambda: gate("H", 0, params=(1.0,)),
    lambda: GateApplication(GateKind.ORACLE, ()),
])
def test_invalid_applications(bad):
    with pytest.raises(GateError):
        bad()


def test_out_of_range_qubit():
    with pytest.raises(GateError):
        apply(basis_state(2, 0), gate("H", 2))


def test_parse_names():
    assert GateKind.parse("hadamard") is GateKind.H
    assert GateKind.parse("H") is GateKind.H
    assert GateKind.parse("SWAP-CORRECTION-10") is GateKind.CORR10
    with pytest.raises(ValueError):
        GateKind.parse("FOO")


def test_non_adjacent_embedding_matches_oracle():
    # CNOT control 2, target 0 in a 3-qubit register
    assert np.allclose(embedded_matrix(GateKind.CNOT, (2, 0), (), 3),
                       embed_oracle(standard_matrix(GateKind.CNOT), (2, 0), 3))
    assert not is_adjacent((0, 2))
    assert is_adjacent((2, 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 8), st.data())
def test_embedding_property(n, data):
    kind = data.draw(st.sampled_from([GateKind.H, GateKind.CNOT, GateKind.TOFFOLI, GateKind.ROT, GateKind.PI8]))
    qubits = tuple(data.draw(st.permutations(range(n)))[: kind.arity])
    params = (data.draw(st.floats(0, 2 * math.pi)),) if kind is GateKind.ROT else ()
    s = random_state(n, np.random.default_rng(data.draw(st.integers(0, 10**6))))
    expected = embed_oracle(standard_matrix(kind, params), qubits, n) @ s.amplitudes
    got = apply(s, GateApplication(kind, qubits, params)).amplitudes
    assert np.allclose(got, expected, atol=1e-12, rtol=0)


def test_inverse_restores_state(rng):
    s = random_state(3, rng)
    for app in (gate("PHASE", 1), gate("TOFFOLI", 2, 0, 1), gate("ROT", 0, params=(0.3,)),
                gate("PHASESHIFT", 0, 2)):
        back = apply_matrix(apply(s, app), inverse_matrix(app), app.qubits)
        assert back.allclose(s, atol=1e-12)


def test_apply_matrix_rejects_non_unitary():
    with pytest.raises(StateError):
        apply_matrix(basis_state(1, 0), [[1, 1], [0, 1]], (0,))


def test_phase_shift_reflects_about_zero():
    s = apply(StateVector([0.6, 0.8]), gate("PHASESHIFT", 0))
    assert np.allclose(s.amplitudes, [0.6, -0.8])


def test_identity_and_wire_are_noops(rng):
    s = random_state(2, rng)
    for name in ("I", "WIRE"):
        assert apply(s, gate(name, 1)).allclose(s, atol=0)


def test_embedding_cache_agrees_with_tensordot_path(rng):
    # 7 qubits bypasses the cached full-matrix route
    s = random_state(7, rng)
    for app in itertools.islice(
        (gate("CNOT", a, b) for a in range(7) for b in range(7) if a != b), 0, None, 7
    ):
        expected = embed_oracle(standard_matrix(GateKind.CNOT), app.qubits, 7) @ s.amplitudes
        assert np.allclose(apply(s, app).amplitudes, expected, atol=1e-12)
