import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoq.fitness import (
    DEFAULT_LEIER_WEIGHTS,
    FitnessValue,
    SchemeMismatch,
    compare,
    ding,
    ding_cost,
    leier,
    lukac,
    meets_target,
    rubinstein,
    rubinstein_raw_error,
    score,
    selection_value,
    spector00,
    spector99,
    spector_correctness,
    standardize_rubinstein,
    worst_fitness,
)
from evoq.gates import gate
from evoq.problems import make_problem
from evoq.program import LinearProgram
from evoq.qstate import basis_state, bell_states


def test_spector99_examples():
    f = spector99([0.0, 0.0, 0.0], 10)
    assert f.components == (0, 0, 0.0001)
    assert spector_correctness([0.5]) == pytest.approx(0.02)
    assert spector_correctness([0.48, 0.0]) == 0
    assert spector99([0.3, 0.9], 99_999)["efficiency"] < 1
    with pytest.raises(ValueError):
        spector99([], 3)


def test_hit_boundary():
    # error 0.48 is a hit, anything above is a miss
    assert spector99([0.48], 1)["misses"] == 0
    assert spector99([0.480001], 1)["misses"] == 1


def test_spector00_examples():
    assert spector00([0, 0, 0, 0], 1.0, 5).components == (0, 1.0, 0, 5)
    assert spector00([0.1, 0.3], 1.0, 5)["max_error"] == 0.3
    a, b = spector00([0, 0], 1.0, 4), spector00([0, 0], 1.0, 5)
    assert compare(a, b) == -1


def test_rubinstein_examples():
    bell = bell_states()["00"]
    raw = rubinstein_raw_error([basis_state(2, 0)], [bell])
    assert raw == pytest.approx(abs(1 - 1 / math.sqrt(2)) + 1 / math.sqrt(2))
    assert raw == pytest.approx(1.0)
    assert rubinstein([bell], [bell]).components[0] == 0
    with pytest.raises(ValueError):
        rubinstein_raw_error([basis_state(1, 0)], [bell])
    with pytest.raises(ValueError):
        rubinstein([bell], [bell], population_max_error=0)


def test_rubinstein_uses_modulus_not_signed_sum():
    # |1> vs |0>: a signed sum would cancel to 0
    assert rubinstein_raw_error([basis_state(1, 1)], [basis_state(1, 0)]) == 2.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=30))
def test_rubinstein_standardization(raws):
    vals = standardize_rubinstein([FitnessValue("rubinstein", ("raw_error", "standardized"), (r, r), "scalar") for r in raws])
    std = [v["standardized"] for v in vals]
    assert all(0 <= s <= 1 for s in std)
    if max(raws) > 0:
        assert std[raws.index(max(raws))] == 1.0
    else:
        assert all(s == 0 for s in std)


def test_lukac_examples():
    assert lukac([1, 1, 1]).value == 1.0
    assert lukac([0.5] * 4).value == 0.5
    assert compare(lukac([0.9]), lukac([0.6])) == -1
    with pytest.raises(ValueError):
        lukac([])


def test_ding_examples():
    assert ding(6, 1.0, 1, 5, 6).value == 0
    assert ding_cost([gate("H", 0), gate("CNOT", 0, 1), gate("WIRE", 1)]) == 3
    assert ding_cost(LinearProgram(2, (gate("H", 0), gate("CNOT", 0, 1), gate("WIRE", 1)))) == 3
    # punish:reward = 5:1 with satcost 6: a correct program of cost c beats a
    # totally wrong empty one iff c < 5, with an exact tie at 5
    assert compare(ding(4, 1.0, 1, 5, 6), ding(0, 0.0, 1, 5, 6)) == -1
    assert compare(ding(5, 1.0, 1, 5, 6), ding(0, 0.0, 1, 5, 6)) == 0
    with pytest.raises(ValueError):
        ding(1, 1.5)


def test_leier_examples():
    assert leier(0, 0, 0, 0).value == 0
    w = DEFAULT_LEIER_WEIGHTS
    # one extra miss outweighs 100 extra gates
    assert w[0] * 1 > w[3] * 100
    a, b = leier(0, 0.9, 0.9, 50, (1, 0, 0, 0)), leier(1, 0, 0, 1, (1, 0, 0, 0))
    assert compare(a, b) == -1
    with pytest.raises(ValueError):
        leier(0, 0, 0, 0, (0, 0, 0, 0))
    with pytest.raises(ValueError):
        leier(0, 0, 0, 0, (1, 0, 0))


def test_compare_examples():
    lex = lambda c: FitnessValue("spector99", ("a", "b", "c"), c)
    assert compare(lex((0, 0.1, 5)), lex((1, 0, 1))) == -1
    assert compare(lex((1, 2, 3)), lex((1, 2, 3))) == 0
    w = lambda c: FitnessValue("leier", ("a", "b"), c, "weighted", (1, 1))
    assert compare(w((0.2, 0.3)), w((0.4, 0.0))) == 1
    with pytest.raises(SchemeMismatch):
        compare(lukac([1]), spector99([0], 1))


def test_total_order_laws_on_random_tuples():
    rng = random.Random(7)
    vals = [FitnessValue("spector00", ("a", "b", "c", "d"),
                         tuple(rng.choice([0, 1, 2, rng.random()]) for _ in range(4)))
            for _ in range(2000)]
    for _ in range(20_000):
        a, b, c = rng.sample(vals, 3)
        ab, ba = compare(a, b), compare(b, a)
        assert ab == -ba
        if ab <= 0 and compare(b, c) <= 0:
            assert compare(a, c) <= 0
        assert (ab == 0) == (a.components == b.components)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=10), st.floats(0, 0.48))
def test_spector99_threshold_invariance(errors, small):
    assert spector_correctness(errors) * max(1, len(errors) - spector99(errors, 0)["misses"]) == pytest.approx(
        spector_correctness(errors + [small]) * max(1, len(errors) + 1 - spector99(errors + [small], 0)["misses"])
    )


def test_monotone_in_gate_count():
    errs = [0.1, 0.6]
    assert compare(spector99(errs, 4), spector99(errs, 5)) == -1
    assert compare(spector00(errs, 1, 4), spector00(errs, 1, 5)) == -1
    assert compare(leier(1, 0.6, 0.1, 4), leier(1, 0.6, 0.1, 5)) == -1
    assert compare(ding(4, 0.5), ding(5, 0.5)) == -1


def test_worst_fitness_loses_to_everything():
    assert compare(spector99([1.0], 60), worst_fitness("spector99")) == -1
    assert compare(lukac([0.01]), worst_fitness("lukac")) == -1
    assert compare(leier(4, 1, 1, 60), worst_fitness("leier")) == -1


def test_selection_value():
    assert selection_value(lukac([0.75])) == 0.25
    with pytest.raises(ValueError):
        selection_value(spector00([0], 1, 1))


def test_meets_target():
    assert meets_target(spector00([0, 0], 1.0, 9), {"misses": 0, "expected_queries": 1})
    assert not meets_target(spector00([0, 0], 2.0, 9), {"misses": 0, "expected_queries": 1})
    assert meets_target(lukac([1.0]), {"correctness": 0.99})
    assert meets_target(ding(3, 1.0), {"correctness": 0.99})
    assert not meets_target(lukac([1.0]), None)


def test_score_deutsch_and_bell():
    d = make_problem({"name": "deutsch"})
    good = LinearProgram(2, (gate("X", 1), gate("H", 0), gate("H", 1), gate("ORACLE", 0, 1), gate("H", 0)))
    f = score(good, d, "spector00")
    assert f["misses"] == 0 and f["expected_queries"] == 1 and f["num_gates"] == 5
    assert f["max_error"] < 1e-12
    empty = score(LinearProgram(2, ()), d, "spector99")
    assert empty["misses"] == 2
    assert score(good, d, "lukac").value == pytest.approx(1.0)
    e = make_problem({"name": "entanglement", "n": 2})
    bell = LinearProgram(2, (gate("H", 0), gate("CNOT", 0, 1)))
    assert score(bell, e, "rubinstein")["raw_error"] < 1e-12
    assert score(bell, e, "ding").components == pytest.approx((-3, 3, 1))
    with pytest.raises(ValueError):
        score(bell, d, "rubinstein")


def test_score_failure_maps_to_worst():
    d = make_problem({"name": "deutsch"})
    wide = LinearProgram(2, tuple(gate(k, q) for q in (0, 1) for k in ("H", "MEASURE")) * 6)
    assert score(wide, d, "spector00", branch_cap=2) == worst_fitness("spector00")
