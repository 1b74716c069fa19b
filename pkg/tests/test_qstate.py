import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoq.qstate import (
    StateError,
    StateVector,
    basis_state,
    bell_states,
    branch_measure,
    fidelity,
    is_entangled_pair,
    max_qubits,
    measure_all,
    measure_qubit,
    random_state,
    tensor,
)

R = 1 / np.sqrt(2)


def test_basis_state_index_convention():
    s = basis_state(3, 0b110)
    assert s.amplitudes[6] == 1
    assert s.ket() == "(1.0000+0.0000j)|110>"


@pytest.mark.parametrize("amps", [[1, 0, 0], [0.5, 0.5], [1]])
def test_invalid_states_rejected(amps):
    with pytest.raises(StateError):
        StateVector(amps)


def test_state_is_immutable():
    s = basis_state(1, 0)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0


def test_from_amplitudes_normalizes():
    s = StateVector.from_amplitudes([3, 4], normalize=True)
    assert np.allclose(s.amplitudes, [0.6, 0.8])
    with pytest.raises(StateError):
        StateVector.from_amplitudes([0, 0], normalize=True)


def test_register_cap_env_override(monkeypatch):
    monkeypatch.setenv("EVOQ_MAX_QUBITS", "3")
    assert max_qubits() == 3
    with pytest.raises(StateError):
        basis_state(4, 0)
    with pytest.raises(StateError):
        tensor(basis_state(2, 0), basis_state(2, 0))


def test_tensor_matches_kron_layout():
    a = StateVector([R, R])
    b = basis_state(1, 1)
    # |+>|1> = (|01> + |11>)/sqrt2
    assert np.allclose(tensor(a, b).amplitudes, [0, R, 0, R])


def test_branch_measure_exact():
    s = StateVector([R, 0, 0, R])
    out = branch_measure(s, 1)
    assert [b for b, _, _ in out] == [0, 1]
    assert all(np.isclose(p, 0.5) for _, p, _ in out)
    assert np.allclose(out[0][2].amplitudes, [1, 0, 0, 0])
    assert np.allclose(out[1][2].amplitudes, [0, 0, 0, 1])
    assert len(branch_measure(basis_state(2, 1), 0)) == 1


def test_measure_all_statistics(rng):
    s = StateVector([np.sqrt(0.2), np.sqrt(0.8)])
    draws = [measure_all(s, rng).observed_bits for _ in range(4000)]
    frac = draws.count("1") / len(draws)
    assert abs(frac - 0.8) < 4 * np.sqrt(0.16 / 4000)


def test_measure_qubit_collapses(rng):
    out = measure_qubit(StateVector([R, 0, 0, R]), 0, rng)
    assert out.observed_bits in ("0", "1")
    assert out.post_state.amplitudes[int(out.observed_bits) * 3] == pytest.approx(1)


def test_bell_states_are_entangled_products_are_not(rng):
    for s in bell_states().values():
        assert is_entangled_pair(s)
    for _ in range(50):
        assert not is_entangled_pair(tensor(random_state(1, rng), random_state(1, rng)))


def test_is_entangled_pair_needs_two_qubits():
    with pytest.raises(StateError):
        is_entangled_pair(basis_state(3, 0))


def test_fidelity_ignores_global_phase(rng):
    s = random_state(2, rng)
    t = StateVector(np.exp(1j * 0.7) * s.amplitudes)
    assert fidelity(s, t) == pytest.approx(1.0)
    assert not s.allclose(t)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_branch_probabilities_sum_to_one(n, seed):
    s = random_state(n, np.random.default_rng(seed))
    for q in range(n):
        total = sum(p for _, p, _ in branch_measure(s, q))
        assert total == pytest.approx(1.0, abs=1e-12)
