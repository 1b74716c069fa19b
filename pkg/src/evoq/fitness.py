"""Fitness schemes with a single lower-is-better ordering.

Every scheme produces a :class:`FitnessValue`. Lexicographic schemes compare
component tuples in priority order, weighted schemes compare the weighted
sum, and scalar schemes compare one component. The one maximizing scheme
(``lukac``, where 1 is best) is flagged ``inverted`` and negated inside the
sort key, so :func:`compare` is the only ordering anybody needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gates import GateKind
from .program import EvaluationError, Program, all_gates, evaluate_block, gate_count
from .problems import ProblemSpec

HIT_THRESHOLD = 0.48
EFFICIENCY_SCALE = 100_000
DEFAULT_LEIER_WEIGHTS = (1.0, 0.5, 0.5, 0.001)
DEFAULT_DING = {"reward": 1.0, "punish": 5.0, "satcost": 6.0}

SCHEME_COMPONENTS = {
    "spector99": ("misses", "correctness", "efficiency"),
    "spector00": ("misses", "expected_queries", "max_error", "num_gates"),
    "rubinstein": ("raw_error", "standardized"),
    "lukac": ("correctness",),
    "ding": ("fitness", "actual_cost", "correctness"),
    "leier": ("misses", "max_error", "correctness", "num_gates"),
}
SCHEMES = tuple(SCHEME_COMPONENTS)
# components where larger is better; every other component is minimized
HIGHER_IS_BETTER = {("lukac", "correctness"), ("ding", "correctness")}


class SchemeMismatch(TypeError):
    pass


@dataclass(frozen=True)
class FitnessValue:
    scheme: str
    names: tuple[str, ...]
    components: tuple[float, ...]
    mode: str = "lexicographic"
    weights: tuple[float, ...] | None = None
    inverted: bool = False
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(float(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) != len(self.names):
            raise ValueError(f"{self.scheme}: {len(comps)} components for {len(self.names)} names")
        if self.mode == "lexicographic":
            key = comps
        elif self.mode == "weighted":
            if self.weights is None or len(self.weights) != len(comps):
                raise ValueError(f"{self.scheme}: weighted mode needs one weight per component")
            key = (sum(w * c for w, c in zip(self.weights, comps)),)
        elif self.mode == "scalar":
            key = (-comps[0],) if self.inverted else (comps[0],)
        else:
            raise ValueError(f"unknown comparison mode {self.mode!r}")
        object.__setattr__(self, "key", key)

    def __getitem__(self, name: str) -> float:
        return self.components[self.names.index(name)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.components))

    @property
    def value(self) -> float:
        """The single number the ordering uses (weighted sum or scalar)."""
        return self.key[0] if self.mode == "weighted" else self.components[0]


def compare(a: FitnessValue, b: FitnessValue) -> int:
    """-1 if ``a`` is better, 1 if ``b`` is better, 0 if equal."""
    if a.scheme != b.scheme:
        raise SchemeMismatch(f"cannot compare {a.scheme} with {b.scheme}")
    return (a.key > b.key) - (a.key < b.key)


def _check_errors(errors) -> np.ndarray:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("no fitness cases")
    if np.any(errors < 0) or np.any(errors > 1):
        raise ValueError("per-case errors must lie in [0, 1]")
    return errors


def _misses(errors: np.ndarray) -> int:
    # a hit is error <= 0.48
    return int(np.count_nonzero(errors > HIT_THRESHOLD))


def spector_correctness(errors) -> float:
    errors = _check_errors(errors)
    hits = errors.size - _misses(errors)
    return float(np.maximum(0.0, errors - HIT_THRESHOLD).sum()) / max(hits, 1)


def spector99(errors: Sequence[float], num_gates: int) -> FitnessValue:
    """(misses, correctness, efficiency), lexicographic."""
    errors = _check_errors(errors)
    return FitnessValue(
        "spector99",
        SCHEME_COMPONENTS["spector99"],
        (_misses(errors), spector_correctness(errors), num_gates / EFFICIENCY_SCALE),
    )


def spector00(errors: Sequence[float], expected_queries: float, num_gates: int) -> FitnessValue:
    """(misses, expected queries, max error, gate count), lexicographic."""
    errors = _check_errors(errors)
    return FitnessValue(
        "spector00",
        SCHEME_COMPONENTS["spector00"],
        (_misses(errors), expected_queries, float(errors.max()), num_gates),
    )


def _amplitudes(states) -> list[np.ndarray]:
    return [np.asarray(getattr(s, "amplitudes", s), dtype=complex) for s in states]


def rubinstein_raw_error(observed, desired) -> float:
    """Sum over cases and basis states of ``|observed - desired|``."""
    obs, des = _amplitudes(observed), _amplitudes(desired)
    if len(obs) != len(des):
        raise ValueError(f"{len(obs)} observed states for {len(des)} desired states")
    total = 0.0
    for o, d in zip(obs, des):
        if o.shape != d.shape:
            raise ValueError(f"dimension mismatch: {o.shape} vs {d.shape}")
        total += float(np.abs(o - d).sum())
    return total


def rubinstein(observed, desired, population_max_error: float = 1.0) -> FitnessValue:
    if population_max_error <= 0:
        raise ValueError("population_max_error must be > 0")
    raw = rubinstein_raw_error(observed, desired)
    return _rubinstein_value(raw, raw / population_max_error)


def _rubinstein_value(raw: float, standardized: float) -> FitnessValue:
    # ordered by raw error, which standardization preserves within a population
    return FitnessValue("rubinstein", SCHEME_COMPONENTS["rubinstein"], (raw, standardized), mode="scalar")


def standardize_rubinstein(values: Sequence[FitnessValue]) -> list[FitnessValue]:
    """Divide each raw error by the population maximum (all-zero stays zero)."""
    worst = max((v.components[0] for v in values if np.isfinite(v.components[0])), default=0.0)
    out = []
    for v in values:
        raw = v.components[0]
        if not np.isfinite(raw):
            out.append(_rubinstein_value(raw, 1.0))
        else:
            out.append(_rubinstein_value(raw, raw / worst if worst > 0 else 0.0))
    return out


def lukac(correct_probabilities: Sequence[float]) -> FitnessValue:
    """Mean probability of a correct result; 1 is best."""
    p = np.asarray(correct_probabilities, dtype=float)
    if p.size == 0:
        raise ValueError("no fitness cases")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return FitnessValue("lukac", SCHEME_COMPONENTS["lukac"], (float(p.mean()),), mode="scalar", inverted=True)


def ding_cost(program) -> float:
    """One-qubit gates cost 1, two-qubit gates 2, the wire 0; wider gates cost their arity."""
    gates = program if isinstance(program, (list, tuple)) else all_gates(program)
    return float(sum(0 if g.kind is GateKind.WIRE else g.arity for g in gates))


def ding(actual_cost: float, correctness: float, reward: float = 1.0,
         punish: float = 5.0, satcost: float = 6.0) -> FitnessValue:
    """``reward * (actual_cost - satcost) + punish * (1 - correctness)``."""
    if not 0 <= correctness <= 1:
        raise ValueError("correctness must lie in [0, 1]")
    if reward <= 0 or punish <= 0:
        raise ValueError("reward and punish must be > 0")
    total = reward * (actual_cost - satcost) + punish * (1 - correctness)
    return FitnessValue("ding", SCHEME_COMPONENTS["ding"], (total, actual_cost, correctness), mode="scalar")


def leier(misses: float, max_error: float, correctness: float, num_gates: float,
          weights: Sequence[float] = DEFAULT_LEIER_WEIGHTS) -> FitnessValue:
    weights = tuple(float(w) for w in weights)
    if len(weights) != 4:
        raise ValueError("leier needs four weights")
    if any(w < 0 for w in weights) or not any(weights):
        raise ValueError("leier weights must be >= 0 and not all zero")
    return FitnessValue(
        "leier", SCHEME_COMPONENTS["leier"], (misses, max_error, correctness, num_gates),
        mode="weighted", weights=weights,
    )


def worst_fitness(scheme: str, params: dict | None = None) -> FitnessValue:
    """Fitness assigned to programs whose evaluation failed."""
    inf = float("inf")
    params = params or {}
    if scheme == "lukac":
        return lukac([0.0])
    if scheme == "rubinstein":
        return _rubinstein_value(inf, 1.0)
    if scheme == "leier":
        return leier(inf, inf, inf, inf, params.get("weights", DEFAULT_LEIER_WEIGHTS))
    if scheme == "ding":
        return FitnessValue("ding", SCHEME_COMPONENTS["ding"], (inf, inf, 0.0), mode="scalar")
    names = SCHEME_COMPONENTS[scheme]
    return FitnessValue(scheme, names, (inf,) * len(names))


def selection_value(fv: FitnessValue) -> float:
    """Lower-is-better value in [0, 1] for roulette-style selection."""
    if fv.scheme == "rubinstein":
        v = fv.components[1]
    elif fv.scheme == "lukac":
        v = 1.0 - fv.components[0]
    elif fv.mode == "scalar":
        v = fv.components[0]
    else:
        raise ValueError(f"{fv.scheme} fitness is not a scalar; use tournament or ranking selection")
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{fv.scheme} fitness {v} outside [0, 1]")
    return v


def meets_target(fv: FitnessValue, target: dict | None) -> bool:
    """Every named component at or below its threshold (at or above where larger is better)."""
    if not target:
        return False
    for name, threshold in target.items():
        value = fv[name]
        if (fv.scheme, name) in HIGHER_IS_BETTER:
            if not value >= threshold:
                return False
        elif not value <= threshold:
            return False
    return True


# --------------------------------------------------------------------------
# program scoring


@dataclass
class CaseOutcomes:
    """Per-case results of one program over a problem's fitness cases."""

    p_correct: np.ndarray          # (C,)
    expected_queries: np.ndarray   # (C,)
    raw_error: float | None        # amplitude error summed over cases (state problems)
    num_gates: int


def case_outcomes(program: Program, problem: ProblemSpec, branch_cap: int) -> CaseOutcomes:
    branches = evaluate_block(program, problem.init_block, problem.oracles, branch_cap)
    probs = np.stack([b.prob for b in branches])              # (B, C)
    queries = np.array([b.queries for b in branches], dtype=float)
    expected = queries @ probs
    raw = None
    if problem.is_decision:
        n = problem.num_qubits
        ones = ((np.arange(2**n) >> (n - 1 - problem.answer_qubit)) & 1).astype(bool)
        labels = problem.labels
        p_correct = np.zeros(probs.shape[1])
        for b, br in zip(probs, branches):
            mass1 = (np.abs(br.block[ones]) ** 2).sum(axis=0)
            p_correct += b * np.where(labels == 1, mass1, 1.0 - mass1)
    else:
        target = problem.target_block
        p_correct = np.zeros(probs.shape[1])
        raw = 0.0
        for b, br in zip(probs, branches):
            overlap = np.abs(np.einsum("ij,ij->j", target.conj(), br.block)) ** 2
            p_correct += b * overlap
            raw += float((b * np.abs(br.block - target).sum(axis=0)).sum())
    return CaseOutcomes(np.clip(p_correct, 0.0, 1.0), expected, raw, gate_count(program))


def score(program: Program, problem: ProblemSpec, scheme: str, params: dict | None = None,
          branch_cap: int = 2**10) -> FitnessValue:
    """Fitness of ``program`` on ``problem``; failures score as the worst value.

    Rubinstein values come back unstandardized (standardized == raw); the
    generation coordinator rescales them with :func:`standardize_rubinstein`.
    """
    params = params or {}
    try:
        out = case_outcomes(program, problem, branch_cap)
    except EvaluationError:
        return worst_fitness(scheme, params)
    errors = 1.0 - out.p_correct
    if scheme == "spector99":
        return spector99(errors, out.num_gates)
    if scheme == "spector00":
        return spector00(errors, float(out.expected_queries.mean()), out.num_gates)
    if scheme == "rubinstein":
        if out.raw_error is None:
            raise ValueError("rubinstein fitness needs target states, not decision labels")
        return _rubinstein_value(out.raw_error, out.raw_error)
    if scheme == "lukac":
        return lukac(out.p_correct)
    if scheme == "ding":
        kw = {**DEFAULT_DING, **{k: params[k] for k in ("reward", "punish", "satcost") if k in params}}
        return ding(ding_cost(program), float(out.p_correct.mean()), **kw)
    if scheme == "leier":
        return leier(
            _misses(errors), float(errors.max()), spector_correctness(errors), out.num_gates,
            params.get("weights", DEFAULT_LEIER_WEIGHTS),
        )
    raise ValueError(f"unknown fitness scheme {scheme!r}")
