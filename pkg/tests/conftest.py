import numpy as np
import pytest


def embed_oracle(matrix, qubits, n):
    """Full 2^n operator built index by index, no reshaping tricks."""
    dim = 2**n
    k = len(qubits)
    full = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (n - 1 - q)) & 1 for q in range(n)]
        local_in = 0
        for q in qubits:
            local_in = (local_in << 1) | bits[q]
        for local_out in range(2**k):
            out_bits = list(bits)
            for pos, q in enumerate(qubits):
                out_bits[q] = (local_out >> (k - 1 - pos)) & 1
            row = int("".join(map(str, out_bits)), 2)
            full[row, col] += matrix[local_out, local_in]
    return full


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_run(gates, n, init, table=None):
    """Reference evaluator: list of (prob, state, bits, queries) by brute force."""
    from evoq.gates import GateKind, phase_shift_matrix, standard_matrix

    branches = [(1.0, np.array(init, dtype=complex), (), 0)]
    dim = 2**n
    for g in gates:
        out = []
        for prob, psi, bits, q in branches:
            if g.kind is GateKind.MEASURE:
                (t,) = g.qubits
                for bit in (0, 1):
                    proj = np.diag([1.0 if ((j >> (n - 1 - t)) & 1) == bit else 0.0 for j in range(dim)])
                    phi = proj @ psi
                    p = float(np.vdot(phi, phi).real)
                    if p > 1e-20:
                        out.append((prob * p, phi / np.sqrt(p), bits + ((t, bit),), q))
                continue
            if g.kind is GateKind.ORACLE:
                m = len(table).bit_length() - 1
                full = np.zeros((dim, dim), dtype=complex)
                for j in range(dim):
                    x = 0
                    for qb in g.qubits[:m]:
                        x = (x << 1) | ((j >> (n - 1 - qb)) & 1)
                    if len(g.qubits) == m + 1:
                        full[j ^ (table[x] << (n - 1 - g.qubits[m])), j] = 1
                    else:
                        full[j, j] = -1 if table[x] else 1
                out.append((prob, full @ psi, bits, q + 1))
                continue
            if g.kind is GateKind.PHASESHIFT:
                small = phase_shift_matrix(len(g.qubits))
            else:
                small = standard_matrix(g.kind, g.params)
            out.append((prob, embed_oracle(small, g.qubits, n) @ psi, bits, q))
        branches = out
    return branches


ACCEPTANCE_LINES: list[str] = []


def record(number: int, ok: bool, text: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
