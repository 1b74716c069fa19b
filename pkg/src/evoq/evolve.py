"""Genetic programming engine for quantum programs.

All randomness flows from one ``random.Random(seed)`` owned by the
coordinator. Fitness evaluation is exact and pure, so farming it out to
worker processes cannot change a run: ``jobs`` only changes the wall time.
"""

from __future__ import annotations

import bisect
import json
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .fitness import (
    HIT_THRESHOLD,
    SCHEME_COMPONENTS,
    FitnessValue,
    case_outcomes,
    meets_target,
    score,
    selection_value,
    standardize_rubinstein,
)
from .gates import GateApplication, GateKind, rot_angles
from .problems import ProblemSpec, make_problem
from .program import (
    EvaluationError,
    GateNode,
    LTNode,
    Leaf,
    LinearProgram,
    LinearTreeProgram,
    Program,
    TreeProgram,
    TreeNode,
    all_gates,
    from_json,
    gate_count,
    lt_depth,
    lt_get,
    lt_paths,
    lt_replace,
    render_text,
    to_json,
    tree_get,
    tree_paths,
    tree_replace,
    tree_size,
)

STRUCTURES = ("linear", "tree", "linear-tree")
SELECTIONS = ("fitness_proportional", "ranking", "tournament", "sus")
# schemes whose value fits the [0, 1] wheel of roulette and SUS
WHEEL_SCHEMES = ("rubinstein", "lukac")
DEFAULT_LENGTH_CAP = 64


class ConfigError(ValueError):
    pass


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class Individual:
    program: Program
    fitness: FitnessValue | None = None
    uid: int = 0
    gates: int = field(default=-1, compare=False)

    def __post_init__(self):
        if self.gates < 0:
            object.__setattr__(self, "gates", gate_count(self.program))

    def key(self) -> tuple:
        """Total order: fitness, then fewer gates, then older lineage."""
        if self.fitness is None:
            raise SelectionError(f"individual {self.uid} has not been evaluated")
        return (self.fitness.key, self.gates, self.uid)


# --------------------------------------------------------------------------
# configuration


@dataclass
class EvolutionConfig:
    problem: dict
    structure: str = "linear"
    scheme: str = "spector00"
    scheme_params: dict = field(default_factory=dict)
    population_size: int = 100
    selection: str = "tournament"
    tournament_size: int = 5
    exclude_losers: bool = False
    ranking_count: int | None = None
    p_mutation: float = 0.1
    p_crossover: float = 0.9
    crossover: str = "variable"
    max_generations: int = 50
    target: dict | None = None
    loop: str = "generational"
    elitism: int = 1
    seed: int = 0
    init: str = "random"
    seed_file: str | None = None
    min_length: int = 1
    max_length: int = 10
    length_cap: int = DEFAULT_LENGTH_CAP
    max_depth: int = 4
    rot_step: float = math.pi / 8
    branch_cap: int = 2**10

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if self.structure not in STRUCTURES:
            bad("structure", f"must be one of {', '.join(STRUCTURES)}")
        if self.scheme not in SCHEME_COMPONENTS:
            bad("fitness.scheme", f"must be one of {', '.join(SCHEME_COMPONENTS)}")
        if self.selection not in SELECTIONS:
            bad("selection.method", f"must be one of {', '.join(SELECTIONS)}")
        if self.selection in ("fitness_proportional", "sus") and self.scheme not in WHEEL_SCHEMES:
            bad("selection.method", f"{self.selection} needs a scalar [0, 1] scheme "
                f"({', '.join(WHEEL_SCHEMES)}), not {self.scheme}")
        if self.population_size < 2:
            bad("population_size", "must be >= 2")
        for name in ("p_mutation", "p_crossover"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                bad(name, "must lie in [0, 1]")
        if self.crossover not in ("fixed", "variable"):
            bad("crossover", "must be 'fixed' or 'variable'")
        if self.loop not in ("generational", "steady_state"):
            bad("loop", "must be 'generational' or 'steady_state'")
        if not 1 <= self.tournament_size <= self.population_size:
            bad("selection.size", "must lie in 1..population_size")
        if self.ranking_count is not None and not 1 <= self.ranking_count <= self.population_size:
            bad("selection.count", "must lie in 1..population_size")
        if self.max_generations < 0:
            bad("max_generations", "must be >= 0")
        if not 0 <= self.elitism < self.population_size:
            bad("elitism", "must lie in 0..population_size-1")
        if self.init not in ("random", "seeded"):
            bad("init.method", "must be 'random' or 'seeded'")
        if self.init == "seeded" and not self.seed_file:
            bad("init.seed_file", "required for seeded initialization")
        if not 0 <= self.min_length <= self.max_length:
            bad("init.min_length", "must satisfy 0 <= min_length <= max_length")
        for name in ("length_cap", "max_depth", "branch_cap"):
            if getattr(self, name) < 1:
                bad(name, "must be positive")
        if self.max_length > self.length_cap:
            bad("init.max_length", "exceeds length_cap")
        if self.rot_step <= 0:
            bad("rot_step", "must be > 0")
        if self.target:
            names = SCHEME_COMPONENTS[self.scheme]
            for key in self.target:
                if key not in names:
                    bad("target", f"{key!r} is not a {self.scheme} component ({', '.join(names)})")

    # nested JSON layout used by config files and report echoes

    def to_dict(self) -> dict:
        return {
            "problem": dict(self.problem),
            "structure": self.structure,
            "fitness": {"scheme": self.scheme, "params": dict(self.scheme_params)},
            "population_size": self.population_size,
            "selection": {
                "method": self.selection,
                "size": self.tournament_size,
                "exclude_losers": self.exclude_losers,
                "count": self.ranking_count,
            },
            "p_mutation": self.p_mutation,
            "p_crossover": self.p_crossover,
            "crossover": self.crossover,
            "max_generations": self.max_generations,
            "target": self.target,
            "loop": self.loop,
            "elitism": self.elitism,
            "seed": self.seed,
            "init": {
                "method": self.init,
                "seed_file": self.seed_file,
                "min_length": self.min_length,
                "max_length": self.max_length,
            },
            "length_cap": self.length_cap,
            "max_depth": self.max_depth,
            "rot_step": self.rot_step,
            "branch_cap": self.branch_cap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvolutionConfig":
        d = dict(d)
        kw: dict = {}
        fit = d.pop("fitness", None)
        if fit is not None:
            kw["scheme"] = fit["scheme"]
            kw["scheme_params"] = dict(fit.get("params") or {})
        sel = d.pop("selection", None)
        if sel is not None:
            kw["selection"] = sel["method"]
            for src, dst in (("size", "tournament_size"), ("exclude_losers", "exclude_losers"),
                             ("count", "ranking_count")):
                if sel.get(src) is not None:
                    kw[dst] = sel[src]
        init = d.pop("init", None)
        if init is not None:
            kw["init"] = init.get("method", "random")
            for name in ("seed_file", "min_length", "max_length"):
                if init.get(name) is not None:
                    kw[name] = init[name]
        names = {f.name for f in fields(cls)}
        for key, value in d.items():
            if key not in names:
                raise ConfigError(f"{key}: unknown configuration key")
            kw[key] = value
        if "problem" not in kw:
            raise ConfigError("problem: required")
        return cls(**kw)


# --------------------------------------------------------------------------
# random programs


class ProgramFactory:
    """Draws random gates and programs that are valid for one problem."""

    def __init__(self, problem: ProblemSpec, cfg: EvolutionConfig):
        self.n = problem.num_qubits
        self.problem = problem
        self.cfg = cfg
        kinds = []
        for kind in problem.gate_set:
            arity = kind.arity
            if arity is not None and arity > self.n:
                continue
            kinds.append(kind)
        if not kinds:
            raise ConfigError("gate_set: no gate fits the register")
        self.kinds = tuple(kinds)
        self.tree_kinds = tuple(k for k in kinds if k is not GateKind.MEASURE) or self.kinds
        self.angles = rot_angles(cfg.rot_step)
        if problem.oracle_qubits is not None:
            self.wide_operands = tuple(problem.oracle_qubits)
        else:
            self.wide_operands = tuple(range(self.n))

    def params(self, kind: GateKind, rng: random.Random) -> tuple[float, ...]:
        return tuple(rng.choice(self.angles) for _ in range(kind.param_count))

    def operands(self, kind: GateKind, rng: random.Random) -> tuple[int, ...]:
        if kind is GateKind.ORACLE:
            return tuple(self.problem.oracle_qubits)
        if kind is GateKind.PHASESHIFT:
            return self.wide_operands
        return tuple(rng.sample(range(self.n), kind.arity))

    def gate(self, rng: random.Random, kind: GateKind | None = None) -> GateApplication:
        kind = kind or rng.choice(self.kinds)
        return GateApplication(kind, self.operands(kind, rng), self.params(kind, rng))

    def gates(self, count: int, rng: random.Random) -> tuple[GateApplication, ...]:
        return tuple(self.gate(rng) for _ in range(count))

    def linear(self, rng: random.Random, length: int | None = None) -> LinearProgram:
        if length is None:
            length = rng.randint(self.cfg.min_length, self.cfg.max_length)
        return LinearProgram(self.n, self.gates(length, rng))

    def tree_node(self, count: int, rng: random.Random) -> TreeNode:
        """Random subtree with at most ``count`` gate nodes."""
        if count <= 0:
            return Leaf(rng.randrange(self.n))
        kind = rng.choice(self.tree_kinds)
        params = self.params(kind, rng)
        if kind.arity is None:
            return GateNode(kind, (), params, self.operands(kind, rng))
        budget = count - 1
        shares = [0] * kind.arity
        for _ in range(budget):
            shares[rng.randrange(kind.arity)] += 1
        children = tuple(self.tree_node(s, rng) for s in shares)
        return GateNode(kind, children, params)

    def tree(self, rng: random.Random) -> TreeProgram:
        count = rng.randint(max(1, self.cfg.min_length), max(1, self.cfg.max_length))
        return TreeProgram(self.n, self.tree_node(count, rng))

    def lt_node(self, depth: int, rng: random.Random, hi: int) -> LTNode:
        segment = self.gates(rng.randint(0, max(0, hi)), rng)
        if depth < self.cfg.max_depth and rng.random() < 0.25:
            half = max(0, hi // 2)
            return LTNode(segment, rng.randrange(self.n),
                          self.lt_node(depth + 1, rng, half), self.lt_node(depth + 1, rng, half))
        return LTNode(segment)

    def linear_tree(self, rng: random.Random) -> LinearTreeProgram:
        length = rng.randint(self.cfg.min_length, self.cfg.max_length)
        root = self.lt_node(0, rng, length)
        if not root.segment and length:
            root = LTNode(self.gates(length, rng), root.branch, root.left, root.right)
        return LinearTreeProgram(self.n, root)

    def program(self, rng: random.Random) -> Program:
        if self.cfg.structure == "linear":
            return self.linear(rng)
        if self.cfg.structure == "tree":
            return self.tree(rng)
        return self.linear_tree(rng)


# --------------------------------------------------------------------------
# initialization


def _retarget_gate(app: GateApplication, problem: ProblemSpec) -> GateApplication:
    if app.kind is GateKind.ORACLE:
        return GateApplication(app.kind, tuple(problem.oracle_qubits), app.params)
    return app


def retarget(program: Program, problem: ProblemSpec) -> Program:
    """Move a program evolved on a smaller instance onto ``problem``'s register."""
    n = problem.num_qubits
    if program.num_qubits > n:
        raise ConfigError(
            f"init.seed_file: seed program uses {program.num_qubits} qubits, problem has {n}"
        )
    if GateKind.ORACLE in {g.kind for g in all_gates(program)} and problem.oracle_qubits is None:
        raise ConfigError("init.seed_file: seed program queries an oracle the problem lacks")
    if isinstance(program, LinearProgram):
        return LinearProgram(n, tuple(_retarget_gate(g, problem) for g in program.gates))
    if isinstance(program, TreeProgram):
        def walk(node):
            if isinstance(node, Leaf):
                return node
            fixed = tuple(problem.oracle_qubits) if node.kind is GateKind.ORACLE else node.fixed
            return GateNode(node.kind, tuple(walk(c) for c in node.children), node.params, fixed)
        return TreeProgram(n, walk(program.root))

    def walk_lt(node):
        if node is None:
            return None
        return LTNode(tuple(_retarget_gate(g, problem) for g in node.segment), node.branch,
                      walk_lt(node.left), walk_lt(node.right))
    return LinearTreeProgram(n, walk_lt(program.root))


def load_seed_programs(path: str | Path) -> list[Program]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"init.seed_file: cannot read {path}: {exc}") from None
    if not isinstance(data, list):
        raise ConfigError("init.seed_file: expected a JSON list of programs")
    try:
        return [from_json(d) for d in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"init.seed_file: bad program: {exc}") from None


class _Lineage:
    def __init__(self):
        self.next_uid = 0

    def __call__(self) -> int:
        uid = self.next_uid
        self.next_uid += 1
        return uid


def init_population(cfg: EvolutionConfig, rng: random.Random, problem: ProblemSpec | None = None,
                    lineage: Callable[[], int] | None = None) -> list[Individual]:
    problem = problem or make_problem(cfg.problem)
    lineage = lineage or _Lineage()
    factory = ProgramFactory(problem, cfg)
    programs: list[Program] = []
    if cfg.init == "seeded":
        for prog in load_seed_programs(cfg.seed_file)[: cfg.population_size]:
            prog = retarget(prog, problem)
            if prog.structure != cfg.structure:
                raise ConfigError(
                    f"init.seed_file: seed program is {prog.structure}, run is {cfg.structure}"
                )
            programs.append(prog)
    while len(programs) < cfg.population_size:
        programs.append(factory.program(rng))
    return [Individual(p, None, lineage()) for p in programs]


# --------------------------------------------------------------------------
# selection


class _Wheel:
    """Cumulative (1 - f) weights; uniform when every weight is zero."""

    def __init__(self, pop: Sequence[Individual]):
        if not pop:
            raise SelectionError("empty population")
        weights = []
        for ind in pop:
            if ind.fitness is None:
                raise SelectionError(f"individual {ind.uid} has not been evaluated")
            weights.append(1.0 - selection_value(ind.fitness))
        total = math.fsum(weights)
        self.uniform = total <= 0.0
        if self.uniform:
            weights = [1.0] * len(pop)
            total = float(len(pop))
        self.cumulative = list(np.cumsum(weights))
        self.total = total

    def index(self, u: float) -> int:
        """Slot containing the point ``u`` in [0, total)."""
        return min(bisect.bisect_right(self.cumulative, u), len(self.cumulative) - 1)


def select_fitness_proportional(pop: Sequence[Individual], rng: random.Random) -> Individual:
    """Roulette wheel: individual i with probability (1 - f_i) / sum(1 - f_j)."""
    wheel = _Wheel(pop)
    return pop[wheel.index(rng.random() * wheel.total)]


def select_sus(pop: Sequence[Individual], count: int, rng: random.Random) -> list[Individual]:
    """Stochastic universal sampling with ``count`` equally spaced pointers."""
    if count < 1:
        raise SelectionError("count must be >= 1")
    wheel = _Wheel(pop)
    step = wheel.total / count
    start = rng.random() * step
    return [pop[wheel.index(start + i * step)] for i in range(count)]


def select_ranking(pop: Sequence[Individual], x: int) -> list[Individual]:
    """The ``x`` best individuals, ties broken by gate count, then lineage id."""
    if not 1 <= x <= len(pop):
        raise SelectionError(f"ranking count {x} outside 1..{len(pop)}")
    return sorted(pop, key=Individual.key)[:x]


def select_tournament(pop: Sequence[Individual], k: int, rng: random.Random,
                      exclude_losers: bool = False):
    """Best of ``k`` drawn without replacement.

    With ``exclude_losers`` the ``k - 1`` beaten entrants are removed and every
    remaining individual is returned instead.
    """
    if not 1 <= k <= len(pop):
        raise SelectionError(f"tournament size {k} outside 1..{len(pop)}")
    entrants = rng.sample(range(len(pop)), k)
    winner = min(entrants, key=lambda i: pop[i].key())
    if not exclude_losers:
        return pop[winner]
    losers = set(entrants) - {winner}
    return [ind for i, ind in enumerate(pop) if i not in losers]


class _ParentSource:
    """Per-generation parent sampler for the configured selection scheme."""

    def __init__(self, pop: Sequence[Individual], cfg: EvolutionConfig, rng: random.Random):
        self.pop = pop
        self.cfg = cfg
        self.rng = rng
        method = cfg.selection
        if method == "fitness_proportional":
            self.wheel = _Wheel(pop)
        elif method == "sus":
            self.queue = select_sus(pop, len(pop), rng)
            rng.shuffle(self.queue)
            self.pos = 0
        elif method == "ranking":
            self.pool = select_ranking(pop, cfg.ranking_count or max(1, len(pop) // 2))
        elif cfg.exclude_losers:
            self.pool = select_tournament(pop, cfg.tournament_size, rng, exclude_losers=True)

    @property
    def uniform_fallback(self) -> bool:
        return getattr(self, "wheel", None) is not None and self.wheel.uniform

    def __call__(self) -> Individual:
        method = self.cfg.selection
        rng = self.rng
        if method == "fitness_proportional":
            return self.pop[self.wheel.index(rng.random() * self.wheel.total)]
        if method == "sus":
            ind = self.queue[self.pos % len(self.queue)]
            self.pos += 1
            return ind
        if method == "ranking" or self.cfg.exclude_losers:
            return rng.choice(self.pool)
        return select_tournament(self.pop, self.cfg.tournament_size, rng)


# --------------------------------------------------------------------------
# variation


def crossover_linear_fixed(a: Sequence, b: Sequence, cut: int) -> list:
    """Head of ``a`` up to ``cut``, then ``b``; the child keeps ``a``'s length.

    Where ``b`` is shorter than ``a`` the tail falls back to ``a``'s genes.
    """
    if not 0 <= cut <= len(a):
        raise ValueError(f"cut {cut} outside 0..{len(a)}")
    return [a[i] if i < cut or i >= len(b) else b[i] for i in range(len(a))]


def crossover_linear_variable(a: Sequence, b: Sequence, cut_a: int, cut_b: int) -> list:
    """``a[:cut_a] + b[cut_b:]``."""
    if not 0 <= cut_a <= len(a) or not 0 <= cut_b <= len(b):
        raise ValueError("cut point out of range")
    return list(a[:cut_a]) + list(b[cut_b:])


def crossover(a: Individual, b: Individual, cfg: EvolutionConfig, rng: random.Random,
              uid: int = 0) -> Individual:
    pa, pb = a.program, b.program
    if pa.structure != pb.structure or pa.num_qubits != pb.num_qubits:
        raise ValueError(f"cannot cross {pa.structure}/{pa.num_qubits} with {pb.structure}/{pb.num_qubits}")
    if isinstance(pa, LinearProgram):
        if cfg.crossover == "fixed":
            genes = crossover_linear_fixed(pa.gates, pb.gates, rng.randint(0, len(pa.gates)))
        else:
            genes = crossover_linear_variable(
                pa.gates, pb.gates, rng.randint(0, len(pa.gates)), rng.randint(0, len(pb.gates))
            )[: cfg.length_cap]
        child: Program = LinearProgram(pa.num_qubits, tuple(genes))
    elif isinstance(pa, TreeProgram):
        path_a = rng.choice(tree_paths(pa.root))
        path_b = rng.choice(tree_paths(pb.root))
        root = tree_replace(pa.root, path_a, tree_get(pb.root, path_b))
        child = TreeProgram(pa.num_qubits, root) if tree_size(root) <= cfg.length_cap else pa
    else:
        path_a = rng.choice(lt_paths(pa.root))
        path_b = rng.choice(lt_paths(pb.root))
        root = lt_replace(pa.root, path_a, lt_get(pb.root, path_b))
        cand = LinearTreeProgram(pa.num_qubits, root)
        ok = lt_depth(root) <= cfg.max_depth and gate_count(cand) <= cfg.length_cap
        child = cand if ok else pa
    return Individual(child, None, uid)


def _mutate_genes(genes: list, factory: ProgramFactory, rng: random.Random, cap: int,
                  min_len: int = 0) -> list:
    ops = []
    if genes:
        ops += ["kind", "operand", "param", "delete"] if len(genes) > min_len else ["kind", "operand", "param"]
    if len(genes) < cap:
        ops.append("insert")
    if not ops:
        return genes
    op = rng.choice(ops)
    genes = list(genes)
    if op == "insert":
        genes.insert(rng.randint(0, len(genes)), factory.gate(rng))
        return genes
    site = rng.randrange(len(genes))
    if op == "delete":
        del genes[site]
        return genes
    g = genes[site]
    if op == "param" and g.params:
        step = factory.cfg.rot_step
        delta = step if rng.random() < 0.5 else -step
        genes[site] = GateApplication(g.kind, g.qubits, ((g.params[0] + delta) % (2 * math.pi),))
        return genes
    if op == "operand" and g.kind.arity is not None and g.kind.arity < factory.n:
        pos = rng.randrange(len(g.qubits))
        free = [q for q in range(factory.n) if q not in g.qubits]
        qubits = list(g.qubits)
        qubits[pos] = rng.choice(free)
        genes[site] = GateApplication(g.kind, tuple(qubits), g.params)
        return genes
    # kind replacement, also the fallback when the chosen op does not apply
    genes[site] = factory.gate(rng)
    return genes


def mutate(ind: Individual, cfg: EvolutionConfig, rng: random.Random, factory: ProgramFactory,
           uid: int | None = None) -> Individual:
    """With probability ``p_mutation`` change one uniformly chosen site."""
    uid = ind.uid if uid is None else uid
    if rng.random() >= cfg.p_mutation:
        return ind if ind.uid == uid else Individual(ind.program, ind.fitness, uid, ind.gates)
    p = ind.program
    if isinstance(p, LinearProgram):
        new: Program = LinearProgram(p.num_qubits, tuple(_mutate_genes(list(p.gates), factory, rng, cfg.length_cap)))
    elif isinstance(p, TreeProgram):
        path = rng.choice(tree_paths(p.root))
        old = tree_get(p.root, path)
        if isinstance(old, GateNode) and old.kind.arity is not None and rng.random() < 0.5:
            same = [k for k in factory.tree_kinds if k.arity == old.kind.arity]
            kind = rng.choice(same)
            node = GateNode(kind, old.children, factory.params(kind, rng))
        else:
            node = factory.tree_node(rng.randint(0, 3), rng)
        root = tree_replace(p.root, path, node)
        new = TreeProgram(p.num_qubits, root) if tree_size(root) <= cfg.length_cap else p
    else:
        new = _mutate_lt(p, cfg, rng, factory)
    return Individual(new, None, uid)


def _mutate_lt(p: LinearTreeProgram, cfg: EvolutionConfig, rng: random.Random,
               factory: ProgramFactory) -> LinearTreeProgram:
    path = rng.choice(lt_paths(p.root))
    node = lt_get(p.root, path)
    ops = ["segment", "segment"]
    if node.branch is None and len(path) < cfg.max_depth:
        ops.append("grow")
    if node.branch is not None:
        ops += ["prune", "branch_qubit"]
    op = rng.choice(ops)
    if op == "segment":
        seg = _mutate_genes(list(node.segment), factory, rng, cfg.length_cap)
        new = LTNode(tuple(seg), node.branch, node.left, node.right)
    elif op == "grow":
        new = LTNode(node.segment, rng.randrange(factory.n),
                     LTNode(factory.gates(rng.randint(0, 2), rng)),
                     LTNode(factory.gates(rng.randint(0, 2), rng)))
    elif op == "prune":
        new = LTNode(node.segment)
    else:
        new = LTNode(node.segment, rng.randrange(factory.n), node.left, node.right)
    cand = LinearTreeProgram(p.num_qubits, lt_replace(p.root, path, new))
    return cand if gate_count(cand) <= cfg.length_cap else p


# --------------------------------------------------------------------------
# evaluation


_WORKER: dict = {}


def _worker_init(problem: ProblemSpec, scheme: str, params: dict, branch_cap: int):
    _WORKER.update(problem=problem, scheme=scheme, params=params, branch_cap=branch_cap)


def _worker_score(program: Program) -> FitnessValue:
    w = _WORKER
    return score(program, w["problem"], w["scheme"], w["params"], w["branch_cap"])


class Evaluator:
    """Scores programs with a memo table and an optional process pool."""

    def __init__(self, problem: ProblemSpec, cfg: EvolutionConfig, jobs: int = 1):
        self.problem = problem
        self.cfg = cfg
        self.cache: dict = {}
        self.evaluations = 0
        self.pool = None
        if jobs > 1:
            self.pool = ProcessPoolExecutor(
                max_workers=jobs, initializer=_worker_init,
                initargs=(problem, cfg.scheme, cfg.scheme_params, cfg.branch_cap),
            )

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _score(self, program: Program) -> FitnessValue:
        return score(program, self.problem, self.cfg.scheme, self.cfg.scheme_params, self.cfg.branch_cap)

    def fitness_of(self, programs: Sequence[Program]) -> list[FitnessValue]:
        todo = []
        seen = set()
        for p in programs:
            if p not in self.cache and p not in seen:
                seen.add(p)
                todo.append(p)
        if todo:
            if self.pool is not None and len(todo) > 1:
                chunk = max(1, len(todo) // (4 * (self.pool._max_workers or 1)))
                results = list(self.pool.map(_worker_score, todo, chunksize=chunk))
            else:
                results = [self._score(p) for p in todo]
            self.cache.update(zip(todo, results))
        self.evaluations += len(programs)
        return [self.cache[p] for p in programs]

    def evaluate(self, pop: list[Individual]) -> list[Individual]:
        """Fill missing fitness values; Rubinstein values are re-standardized."""
        missing = [i for i, ind in enumerate(pop) if ind.fitness is None]
        values = self.fitness_of([pop[i].program for i in missing])
        out = list(pop)
        for i, v in zip(missing, values):
            out[i] = Individual(pop[i].program, v, pop[i].uid, pop[i].gates)
        if self.cfg.scheme == "rubinstein":
            fits = standardize_rubinstein([ind.fitness for ind in out])
            out = [Individual(ind.program, f, ind.uid, ind.gates) for ind, f in zip(out, fits)]
        return out


# --------------------------------------------------------------------------
# the loop


@dataclass
class RunReport:
    config: dict
    seed: int
    rows: list[dict]
    terminated: str
    best_program: dict
    best_text: str
    best_fitness: dict
    best_gates: int
    evaluations: int
    wall_time: float
    better_than_classical: bool | None = None
    expected_queries: float | None = None
    uniform_fallbacks: int = 0

    @property
    def generations(self) -> int:
        return self.rows[-1]["generation"] if self.rows else 0

    @property
    def reached_target(self) -> bool:
        return self.terminated == "target"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "terminated": self.terminated,
            "generations": self.generations,
            "evaluations": self.evaluations,
            "wall_time": self.wall_time,
            "better_than_classical": self.better_than_classical,
            "expected_queries": self.expected_queries,
            "uniform_fallbacks": self.uniform_fallbacks,
            "best": {
                "program": self.best_program,
                "text": self.best_text,
                "fitness": self.best_fitness,
                "gates": self.best_gates,
            },
            "rows": self.rows,
            "config": self.config,
        }

    def component_table(self) -> list[dict]:
        """Per-generation rows; identical across repeats with the same seed."""
        return self.rows


def _row(gen: int, pop: list[Individual], evaluations: int) -> dict:
    ranked = sorted(pop, key=Individual.key)
    return {
        "generation": gen,
        "evaluations": evaluations,
        "best": ranked[0].fitness.as_dict(),
        "median": ranked[(len(ranked) - 1) // 2].fitness.as_dict(),
        "mean_gates": sum(ind.gates for ind in pop) / len(pop),
    }


def _breed(parents: _ParentSource, cfg: EvolutionConfig, rng: random.Random,
           factory: ProgramFactory, lineage: _Lineage) -> Individual:
    if rng.random() < cfg.p_crossover:
        a, b = parents(), parents()
        child = crossover(a, b, cfg, rng, lineage())
    else:
        # a verbatim copy; rescoring hits the cache but counts as an evaluation
        src = parents()
        child = Individual(src.program, None, lineage(), src.gates)
    return mutate(child, cfg, rng, factory)


def _classical_check(best: Individual, problem: ProblemSpec, cfg: EvolutionConfig):
    if not problem.is_decision or problem.oracles is None:
        return None, None
    try:
        out = case_outcomes(best.program, problem, cfg.branch_cap)
    except EvaluationError:
        return False, None
    queries = float(out.expected_queries.mean())
    solved = bool(np.all(1.0 - out.p_correct <= HIT_THRESHOLD))
    return solved and queries < problem.classical_queries, queries


def run(cfg: EvolutionConfig, jobs: int = 1, progress: Callable[[dict], None] | None = None) -> RunReport:
    """Evolve until the target is met or the generation budget runs out."""
    start = time.perf_counter()
    problem = make_problem(cfg.problem)
    rng = random.Random(cfg.seed)
    lineage = _Lineage()
    factory = ProgramFactory(problem, cfg)
    rows: list[dict] = []
    fallbacks = 0
    with Evaluator(problem, cfg, jobs) as ev:
        pop = ev.evaluate(init_population(cfg, rng, problem, lineage))

        def record(gen):
            row = _row(gen, pop, ev.evaluations)
            rows.append(row)
            if progress:
                progress(row)

        def best_of(p):
            return min(p, key=Individual.key)

        terminated = "budget"
        if cfg.loop == "generational":
            for gen in range(cfg.max_generations + 1):
                record(gen)
                if meets_target(best_of(pop).fitness, cfg.target):
                    terminated = "target"
                    break
                if gen == cfg.max_generations:
                    break
                parents = _ParentSource(pop, cfg, rng)
                fallbacks += parents.uniform_fallback
                nxt = sorted(pop, key=Individual.key)[: cfg.elitism]
                while len(nxt) < cfg.population_size:
                    nxt.append(_breed(parents, cfg, rng, factory, lineage))
                pop = ev.evaluate(nxt)
        else:
            size = cfg.population_size
            record(0)
            if meets_target(best_of(pop).fitness, cfg.target):
                terminated = "target"
            else:
                for step in range(1, cfg.max_generations * size + 1):
                    parents = _ParentSource(pop, cfg, rng)
                    fallbacks += parents.uniform_fallback
                    child = ev.evaluate([_breed(parents, cfg, rng, factory, lineage)])[0]
                    entrants = rng.sample(range(size), min(cfg.tournament_size, size))
                    best_idx = min(range(size), key=lambda i: pop[i].key())
                    loser = max(entrants, key=lambda i: pop[i].key())
                    if loser != best_idx:
                        pop = list(pop)
                        pop[loser] = child
                        if cfg.scheme == "rubinstein":
                            pop = ev.evaluate(pop)
                    hit = meets_target(best_of(pop).fitness, cfg.target)
                    if hit or step % size == 0:
                        record(math.ceil(step / size))
                    if hit:
                        terminated = "target"
                        break
        best = best_of(pop)
        btc, queries = _classical_check(best, problem, cfg)
        return RunReport(
            config=cfg.to_dict(),
            seed=cfg.seed,
            rows=rows,
            terminated=terminated,
            best_program=to_json(best.program),
            best_text=render_text(best.program),
            best_fitness=best.fitness.as_dict(),
            best_gates=best.gates,
            evaluations=ev.evaluations,
            wall_time=time.perf_counter() - start,
            better_than_classical=btc,
            expected_queries=queries,
            uniform_fallbacks=fallbacks,
        )


def with_seed(cfg: EvolutionConfig, seed: int) -> EvolutionConfig:
    return replace(cfg, seed=seed)
