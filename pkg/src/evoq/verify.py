"""Analytic validation suites for the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gates import MATRIX_KINDS, GateKind, is_unitary, phase_shift_matrix, rot_angles, standard_matrix
from .problems import grover_closed_form, grover_success_probability, teleport
from .qstate import random_state


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}" + (f"  ({self.detail})" if self.detail else "")


def gates_suite(tol: float = 1e-12) -> list[Check]:
    out = []
    for kind in MATRIX_KINDS:
        angles = rot_angles() if kind is GateKind.ROT else [None]
        ok = all(
            is_unitary(standard_matrix(kind, () if a is None else (a,)), tol) for a in angles
        )
        out.append(Check(f"unitary {kind.value}", ok))
    for k in (1, 2, 3):
        out.append(Check(f"unitary PHASESHIFT k={k}", is_unitary(phase_shift_matrix(k), tol)))
    return out


def teleport_suite(samples: int = 100, seed: int = 0, tol: float = 1e-10) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    seen: set[str] = set()
    swap_ok = True
    for _ in range(samples):
        alpha, beta = random_state(1, rng).amplitudes
        for br in teleport(alpha, beta):
            seen.add(br.bits)
            worst = max(worst, abs(br.fidelity - 1.0))
            if br.bits == "01":
                swap_ok &= bool(np.allclose(br.bob_before.amplitudes, [beta, alpha], atol=tol, rtol=0))
    return [
        Check(f"teleport fidelity over {samples} inputs", worst <= tol and len(seen) == 4,
              f"max |F-1| = {worst:.2e}, branches {sorted(seen)}"),
        Check("teleport branch 01 holds beta|0> + alpha|1> before correction", swap_ok),
    ]


def grover_suite(max_m: int = 5, max_k: int = 10, tol: float = 1e-9) -> list[Check]:
    worst = 0.0
    for m in range(1, max_m + 1):
        for k in range(max_k + 1):
            worst = max(worst, abs(grover_success_probability(m, 0, k) - grover_closed_form(m, k)))
    p42 = grover_success_probability(4, 5, 3)
    p21 = grover_success_probability(2, 3, 1)
    return [
        Check(f"grover closed form m<={max_m}, k<={max_k}", worst <= tol, f"max dev {worst:.2e}"),
        Check("grover m=4 k=3", abs(p42 - grover_closed_form(4, 3)) <= tol and round(p42, 4) == 0.9613,
              f"P = {p42:.10f}"),
        Check("grover m=2 k=1 is certain", math.isclose(p21, 1.0, abs_tol=1e-12), f"P = {p21:.15f}"),
    ]


SUITES = {"gates": gates_suite, "teleport": teleport_suite, "grover": grover_suite}
