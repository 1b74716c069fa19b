"""Evolvable quantum program structures and their exact evaluation.

Three structures are supported:

* :class:`LinearProgram` -- a flat gate sequence.
* :class:`TreeProgram` -- gate-building functions as parent nodes, qubit
  indices as leaves, executed in post-order.
* :class:`LinearTreeProgram` -- a binary tree of linear segments that branches
  on a partial measurement at each inner node.

Evaluation never samples. Every ``MEASURE`` (and every linear-tree branch)
forks the run into its outcomes, each carrying its probability, so fitness is
a deterministic function of the program.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Iterator, Sequence, Union

import numpy as np

from .gates import GateApplication, GateError, GateKind, apply_to_block, is_adjacent
from .qstate import StateVector

if TYPE_CHECKING:
    from .problems import Oracle

DEFAULT_BRANCH_CAP = 2**10
PROB_TOL = 1e-10
# measurement branches at or below this probability are dropped
ZERO_PROB = 1e-20


class EvaluationError(RuntimeError):
    pass


class BranchLimitError(EvaluationError):
    pass


class ParseError(ValueError):
    pass


# --------------------------------------------------------------------------
# structures


@dataclass(frozen=True)
class LinearProgram:
    num_qubits: int
    gates: tuple[GateApplication, ...] = ()

    structure = "linear"

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for app in self.gates:
            app.check_range(self.num_qubits)

    def __len__(self):
        return len(self.gates)


@dataclass(frozen=True)
class Leaf:
    qubit: int


@dataclass(frozen=True)
class GateNode:
    """A gate-building function.

    ``fixed`` holds the operands of register-wide kinds (ORACLE, PHASESHIFT),
    which take no children and behave as zero-argument functions.
    """

    kind: GateKind
    children: tuple["TreeNode", ...] = ()
    params: tuple[float, ...] = ()
    fixed: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "fixed", tuple(int(q) for q in self.fixed))
        arity = self.kind.arity
        if arity is None:
            if self.children or not self.fixed:
                raise GateError(f"{self.kind.value} tree node takes fixed operands, not children")
        elif len(self.children) != arity:
            raise GateError(
                f"{self.kind.value} node needs {arity} children, got {len(self.children)}"
            )
        if len(self.params) != self.kind.param_count:
            raise GateError(f"{self.kind.value} node has wrong parameter count")


TreeNode = Union[Leaf, GateNode]


@dataclass(frozen=True)
class TreeProgram:
    num_qubits: int
    root: TreeNode

    structure = "tree"

    def __post_init__(self):
        for node in _iter_tree(self.root):
            if isinstance(node, GateNode) and node.fixed:
                GateApplication(node.kind, node.fixed, node.params).check_range(self.num_qubits)


@dataclass(frozen=True)
class LTNode:
    segment: tuple[GateApplication, ...] = ()
    branch: int | None = None
    left: "LTNode | None" = None
    right: "LTNode | None" = None

    def __post_init__(self):
        object.__setattr__(self, "segment", tuple(self.segment))
        if self.branch is None:
            if self.left is not None or self.right is not None:
                raise GateError("a linear-tree node without a branch qubit cannot have children")
        else:
            # a missing child is an empty leaf
            if self.left is None:
                object.__setattr__(self, "left", LTNode())
            if self.right is None:
                object.__setattr__(self, "right", LTNode())


@dataclass(frozen=True)
class LinearTreeProgram:
    num_qubits: int
    root: LTNode

    structure = "linear-tree"

    def __post_init__(self):
        for node in iter_lt_nodes(self.root):
            for app in node.segment:
                app.check_range(self.num_qubits)
            if node.branch is not None and not 0 <= node.branch < self.num_qubits:
                raise GateError(f"branch qubit {node.branch} out of range")


Program = Union[LinearProgram, TreeProgram, LinearTreeProgram]


def _iter_tree(node: TreeNode) -> Iterator[TreeNode]:
    yield node
    if isinstance(node, GateNode):
        for child in node.children:
            yield from _iter_tree(child)


def iter_lt_nodes(node: LTNode | None) -> Iterator[LTNode]:
    if node is None:
        return
    yield node
    yield from iter_lt_nodes(node.left)
    yield from iter_lt_nodes(node.right)


# paths address nodes for the genetic operators: a tuple of child positions

def tree_paths(node: TreeNode, prefix=()) -> list[tuple[int, ...]]:
    paths = [prefix]
    if isinstance(node, GateNode):
        for i, child in enumerate(node.children):
            paths.extend(tree_paths(child, prefix + (i,)))
    return paths


def tree_get(node: TreeNode, path) -> TreeNode:
    for i in path:
        node = node.children[i]
    return node


def tree_replace(node: TreeNode, path, new: TreeNode) -> TreeNode:
    if not path:
        return new
    children = list(node.children)
    children[path[0]] = tree_replace(children[path[0]], path[1:], new)
    return GateNode(node.kind, tuple(children), node.params, node.fixed)


def tree_size(node: TreeNode) -> int:
    """Number of gate nodes."""
    return sum(1 for x in _iter_tree(node) if isinstance(x, GateNode))


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf) or not node.children:
        return 0
    return 1 + max(tree_depth(c) for c in node.children)


def lt_paths(node: LTNode, prefix="") -> list[str]:
    """Paths of existing nodes as strings of 'L'/'R'."""
    paths = [prefix]
    if node.left is not None:
        paths.extend(lt_paths(node.left, prefix + "L"))
    if node.right is not None:
        paths.extend(lt_paths(node.right, prefix + "R"))
    return paths


def lt_get(node: LTNode, path: str) -> LTNode:
    for step in path:
        node = node.left if step == "L" else node.right
    return node


def lt_replace(node: LTNode, path: str, new: LTNode) -> LTNode:
    if not path:
        return new
    if path[0] == "L":
        return LTNode(node.segment, node.branch, lt_replace(node.left, path[1:], new), node.right)
    return LTNode(node.segment, node.branch, node.left, lt_replace(node.right, path[1:], new))


def lt_depth(node: LTNode | None) -> int:
    if node is None or node.branch is None:
        return 0
    return 1 + max(lt_depth(node.left), lt_depth(node.right))


# --------------------------------------------------------------------------
# tree linearization

def _tree_walk(node: TreeNode, n: int, out: list[GateApplication]) -> int:
    """Post-order collection; returns the index the node evaluates to."""
    if isinstance(node, Leaf):
        return node.qubit % n
    if node.fixed:
        out.append(GateApplication(node.kind, node.fixed, node.params))
        return node.fixed[0]
    qubits = tuple(_tree_walk(c, n, out) for c in node.children)
    if len(set(qubits)) == len(qubits):
        out.append(GateApplication(node.kind, qubits, node.params))
    # colliding operands make the node a no-op
    return qubits[0]


def linearize(p: TreeProgram) -> LinearProgram:
    out: list[GateApplication] = []
    _tree_walk(p.root, p.num_qubits, out)
    return LinearProgram(p.num_qubits, tuple(out))


def gate_count(p) -> int:
    """Gate applications excluding WIRE; MEASURE, ORACLE and branch points count."""
    if isinstance(p, LinearProgram):
        return sum(1 for g in p.gates if g.kind is not GateKind.WIRE)
    if isinstance(p, TreeProgram):
        return gate_count(linearize(p))
    if isinstance(p, LinearTreeProgram):
        total = 0
        for node in iter_lt_nodes(p.root):
            total += sum(1 for g in node.segment if g.kind is not GateKind.WIRE)
            total += node.branch is not None
        return total
    if isinstance(p, (list, tuple)):
        return sum(1 for g in p if g.kind is not GateKind.WIRE)
    raise TypeError(f"not a program: {type(p).__name__}")


def all_gates(p: Program) -> list[GateApplication]:
    if isinstance(p, LinearProgram):
        return list(p.gates)
    if isinstance(p, TreeProgram):
        return list(linearize(p).gates)
    return [g for node in iter_lt_nodes(p.root) for g in node.segment]


# --------------------------------------------------------------------------
# evaluation engine
#
# A run carries a list of branches. Each branch holds one column per fitness
# case, so a whole case list is evaluated in a single pass; single-state
# evaluation is the one-column special case.


@dataclass
class _Branch:
    prob: np.ndarray          # (C,)
    block: np.ndarray         # (dim, C), columns normalized where prob > 0
    bits: tuple[tuple[int, int], ...]
    queries: int


@lru_cache(maxsize=4096)
def _oracle_action(oracles: tuple, qubits: tuple[int, ...], n: int):
    """Per-case index map (XOR form) or sign table (phase form)."""
    dim = 2**n
    idx = np.arange(dim)
    shifts = [n - 1 - q for q in qubits]
    m = oracles[0].input_bits
    if len(qubits) not in (m, m + 1):
        raise EvaluationError(
            f"ORACLE on {len(qubits)} qubits does not fit a {m}-bit oracle"
        )
    x = np.zeros(dim, dtype=np.int64)
    for s in shifts[:m]:
        x = (x << 1) | ((idx >> s) & 1)
    cols = []
    for oracle in oracles:
        if oracle.input_bits != m:
            raise EvaluationError("fitness cases mix oracle input sizes")
        fx = np.asarray(oracle.truth_table, dtype=np.int64)[x]
        if len(qubits) == m + 1:
            cols.append(idx ^ (fx << shifts[m]))
        else:
            cols.append(1.0 - 2.0 * fx)
    table = np.stack(cols, axis=1)
    table.setflags(write=False)
    return len(qubits) == m + 1, table


@lru_cache(maxsize=1024)
def _bit_mask(qubit: int, n: int) -> np.ndarray:
    mask = ((np.arange(2**n) >> (n - 1 - qubit)) & 1).astype(bool)
    mask.setflags(write=False)
    return mask


def _split(branch: _Branch, qubit: int, n: int) -> list[_Branch]:
    ones = _bit_mask(qubit, n)
    out = []
    for bit, rows in ((0, ~ones), (1, ones)):
        projected = np.where(rows[:, None], branch.block, 0.0)
        mass = np.einsum("ij,ij->j", projected.real, projected.real) + np.einsum(
            "ij,ij->j", projected.imag, projected.imag
        )
        prob = branch.prob * mass
        if not np.any(prob > ZERO_PROB):
            continue
        scale = np.zeros_like(mass)
        live = mass > 0
        scale[live] = 1.0 / np.sqrt(mass[live])
        out.append(_Branch(prob, projected * scale, branch.bits + ((qubit, bit),), branch.queries))
    return out


class _Engine:
    def __init__(self, n: int, oracles: tuple | None, branch_cap: int):
        self.n = n
        self.oracles = oracles
        self.branch_cap = branch_cap

    def op(self, branches: list[_Branch], app: GateApplication) -> list[_Branch]:
        kind = app.kind
        if kind is GateKind.MEASURE:
            out = [b for br in branches for b in _split(br, app.qubits[0], self.n)]
            if len(out) > self.branch_cap:
                raise BranchLimitError(f"more than {self.branch_cap} measurement branches")
            return out
        if kind is GateKind.ORACLE:
            if self.oracles is None or any(o is None for o in self.oracles):
                raise EvaluationError("ORACLE gate evaluated without an oracle")
            xor_form, table = _oracle_action(self.oracles, app.qubits, self.n)
            for br in branches:
                if xor_form:
                    br.block = np.take_along_axis(br.block, table, axis=0)
                else:
                    br.block = br.block * table
                br.queries += 1
            return branches
        for br in branches:
            br.block = apply_to_block(br.block, app, self.n)
        return branches

    def run(self, branches, apps) -> list[_Branch]:
        for app in apps:
            branches = self.op(branches, app)
        return branches

    def run_tree(self, branches, node: TreeNode) -> tuple[int, list[_Branch]]:
        if isinstance(node, Leaf):
            return node.qubit % self.n, branches
        if node.fixed:
            app = GateApplication(node.kind, node.fixed, node.params)
            return node.fixed[0], self.op(branches, app)
        qubits = []
        for child in node.children:
            q, branches = self.run_tree(branches, child)
            qubits.append(q)
        if len(set(qubits)) == len(qubits):
            branches = self.op(branches, GateApplication(node.kind, tuple(qubits), node.params))
        return qubits[0], branches

    def run_lt(self, branches, node: LTNode | None) -> list[_Branch]:
        if node is None:
            return branches
        branches = self.run(branches, node.segment)
        if node.branch is None:
            return branches
        zeros, ones = [], []
        for br in branches:
            for part in _split(br, node.branch, self.n):
                (zeros if part.bits[-1][1] == 0 else ones).append(part)
        if len(zeros) + len(ones) > self.branch_cap:
            raise BranchLimitError(f"more than {self.branch_cap} measurement branches")
        out = self.run_lt(zeros, node.left) if zeros else []
        out += self.run_lt(ones, node.right) if ones else []
        if len(out) > self.branch_cap:
            raise BranchLimitError(f"more than {self.branch_cap} measurement branches")
        return out


def evaluate_block(
    p: Program,
    init: np.ndarray,
    oracles: Sequence["Oracle | None"] | None = None,
    branch_cap: int = DEFAULT_BRANCH_CAP,
) -> list[_Branch]:
    """Evaluate ``p`` on every column of ``init`` (shape ``(2**n, C)``)."""
    n = p.num_qubits
    init = np.asarray(init, dtype=complex)
    if init.ndim == 1:
        init = init[:, None]
    if init.shape[0] != 2**n:
        raise EvaluationError(f"initial state has {init.shape[0]} amplitudes, program expects {2**n}")
    cases = init.shape[1]
    if oracles is not None:
        oracles = tuple(oracles)
        if len(oracles) != cases:
            raise EvaluationError("one oracle per fitness case is required")
    engine = _Engine(n, oracles, branch_cap)
    start = [_Branch(np.ones(cases), init.copy(), (), 0)]
    if isinstance(p, LinearProgram):
        return engine.run(start, p.gates)
    if isinstance(p, TreeProgram):
        return engine.run_tree(start, p.root)[1]
    if isinstance(p, LinearTreeProgram):
        return engine.run_lt(start, p.root)
    raise TypeError(f"not a program: {type(p).__name__}")


@dataclass(frozen=True)
class Branch:
    probability: float
    state: StateVector
    bits: tuple[tuple[int, int], ...]
    queries: int = 0


@dataclass(frozen=True)
class EvaluationResult:
    branches: tuple[Branch, ...]
    expected_oracle_calls: float
    gate_count: int

    def total_probability(self) -> float:
        return sum(b.probability for b in self.branches)

    def basis_probabilities(self) -> np.ndarray:
        """Marginal distribution over basis states, summed over branches."""
        return sum(b.probability * b.state.probabilities() for b in self.branches)


def _single(p: Program, init: StateVector, oracle, branch_cap) -> EvaluationResult:
    if init.num_qubits != p.num_qubits:
        raise EvaluationError(
            f"program is for {p.num_qubits} qubits, initial state has {init.num_qubits}"
        )
    oracles = None if oracle is None else [oracle]
    raw = evaluate_block(p, init.amplitudes, oracles, branch_cap)
    branches = tuple(
        Branch(float(b.prob[0]), StateVector._trusted(b.block[:, 0].copy()), b.bits, b.queries)
        for b in raw
    )
    expected = float(sum(b.probability * b.queries for b in branches))
    return EvaluationResult(branches, expected, gate_count(p))


def eval_linear(p: LinearProgram, init: StateVector, oracle=None,
                branch_cap: int = DEFAULT_BRANCH_CAP) -> EvaluationResult:
    return _single(p, init, oracle, branch_cap)


def eval_tree(p: TreeProgram, init: StateVector, oracle=None,
              branch_cap: int = DEFAULT_BRANCH_CAP) -> EvaluationResult:
    return _single(p, init, oracle, branch_cap)


def eval_linear_tree(p: LinearTreeProgram, init: StateVector, oracle=None,
                     branch_cap: int = DEFAULT_BRANCH_CAP) -> EvaluationResult:
    return _single(p, init, oracle, branch_cap)


def evaluate(p: Program, init: StateVector, oracle=None,
             branch_cap: int = DEFAULT_BRANCH_CAP) -> EvaluationResult:
    return _single(p, init, oracle, branch_cap)


# --------------------------------------------------------------------------
# Lukac array-of-strings encoding
#
# Each time step is a list of tokens covering wires 0..n-1 top to bottom. A
# multi-qubit token spans as many adjacent wires as its arity; operands not in
# ascending order carry an "@" suffix of relative offsets, e.g. "CNOT@10" is a
# CNOT whose control sits on the lower wire.

_TOKEN_RE = re.compile(r"^([A-Z0-9]+)(?:\(([^)]*)\))?(?:@(\d+))?$")


class LukacEncodingError(ValueError):
    pass


def _token(app: GateApplication) -> str:
    kind = app.kind
    if kind in (GateKind.ORACLE, GateKind.PHASESHIFT):
        raise LukacEncodingError(f"{kind.value} cannot be tiled into a fixed grid")
    tok = kind.name
    if app.params:
        tok += "(" + ",".join(repr(x) for x in app.params) + ")"
    lo = min(app.qubits)
    offsets = [q - lo for q in app.qubits]
    if offsets != sorted(offsets):
        tok += "@" + "".join(str(o) for o in offsets)
    return tok


def lukac_encode(p: LinearProgram, n: int | None = None) -> list[list[str]]:
    n = p.num_qubits if n is None else n
    if n < p.num_qubits:
        raise LukacEncodingError(f"program uses {p.num_qubits} wires, grid has {n}")
    steps: list[list[str]] = []
    current: list[tuple[int, int, str]] = []

    def flush():
        if not current:
            return
        row, tokens = 0, []
        for lo, span, tok in current:
            tokens.extend(["WIRE"] * (lo - row))
            tokens.append(tok)
            row = lo + span
        tokens.extend(["WIRE"] * (n - row))
        steps.append(tokens)
        current.clear()

    for app in p.gates:
        if app.kind is GateKind.WIRE:
            continue
        if not is_adjacent(app.qubits):
            raise LukacEncodingError(f"{app.kind.value} on non-adjacent wires {app.qubits}")
        lo = min(app.qubits)
        # join the open step only below everything already in it, which keeps
        # top-to-bottom decoding order equal to program order
        if current and lo < current[-1][0] + current[-1][1]:
            flush()
        current.append((lo, app.arity, _token(app)))
    flush()
    return steps


def lukac_decode(steps: list[list[str]], n: int | None = None, keep_wires: bool = False) -> LinearProgram:
    gates = []
    width = None
    for t, tokens in enumerate(steps):
        row = 0
        for tok in tokens:
            m = _TOKEN_RE.match(tok)
            if not m:
                raise LukacEncodingError(f"step {t}: bad token {tok!r}")
            name, params, order = m.groups()
            try:
                kind = GateKind[name]
            except KeyError:
                raise LukacEncodingError(f"step {t}: unknown gate {name!r}") from None
            span = kind.arity
            if span is None:
                raise LukacEncodingError(f"step {t}: {name} cannot appear in a grid")
            offsets = [int(c) for c in order] if order else list(range(span))
            if sorted(offsets) != list(range(span)):
                raise LukacEncodingError(f"step {t}: bad operand order in {tok!r}")
            values = tuple(float(x) for x in params.split(",")) if params else ()
            if kind is not GateKind.WIRE or keep_wires:
                gates.append(GateApplication(kind, tuple(row + o for o in offsets), values))
            row += span
        if width is None:
            width = row
        elif row != width:
            raise LukacEncodingError(f"step {t} covers {row} wires, expected {width}")
    n = n if n is not None else (width or 1)
    if width is not None and width != n:
        raise LukacEncodingError(f"grid covers {width} wires, expected {n}")
    return LinearProgram(n, tuple(gates))


# --------------------------------------------------------------------------
# text notation: one s-expression per gate, e.g. "(HADAMARD 0)", "(CNOT 1 2)"

def _fmt_gate(app: GateApplication) -> str:
    parts = [app.kind.value] + [str(q) for q in app.qubits] + [repr(x) for x in app.params]
    return "(" + " ".join(parts) + ")"


def _fmt_tree(node: TreeNode, indent: int) -> str:
    pad = "  " * indent
    if isinstance(node, Leaf):
        return pad + str(node.qubit)
    if node.fixed:
        return pad + "(" + " ".join([node.kind.value] + [str(q) for q in node.fixed]) + ")"
    tail = "".join(" " + repr(x) for x in node.params)
    if all(isinstance(c, Leaf) for c in node.children):
        args = " ".join(str(c.qubit) for c in node.children)
        return f"{pad}({node.kind.value} {args}{tail})"
    lines = [pad + "(" + node.kind.value]
    lines += [_fmt_tree(c, indent + 1) for c in node.children]
    return "\n".join(lines) + tail + ")"


def _fmt_lt(node: LTNode, indent: int) -> list[str]:
    pad = "  " * indent
    lines = [pad + _fmt_gate(g) for g in node.segment]
    if node.branch is not None:
        lines.append(f"{pad}(BRANCH {node.branch}")
        for label, child in (("LEFT", node.left), ("RIGHT", node.right)):
            body = _fmt_lt(child, indent + 2) if child is not None else []
            if body:
                lines.append(f"{pad}  ({label}")
                lines.extend(body)
                lines[-1] += ")"
            else:
                lines.append(f"{pad}  ({label})")
        lines[-1] += ")"
    return lines


def render_text(p, header: bool = False) -> str:
    if isinstance(p, LinearProgram):
        body = "\n".join(_fmt_gate(g) for g in p.gates)
    elif isinstance(p, TreeProgram):
        body = _fmt_tree(p.root, 0)
    elif isinstance(p, LinearTreeProgram):
        body = "\n".join(_fmt_lt(p.root, 0))
    elif isinstance(p, (list, tuple)):
        body = "\n".join(_fmt_gate(g) for g in p)
    else:
        raise TypeError(f"not a program: {type(p).__name__}")
    if header and hasattr(p, "structure"):
        return f";; evoq structure={p.structure} qubits={p.num_qubits}\n" + body
    return body


_HEADER_RE = re.compile(r"^\s*;;\s*evoq\s+(.*)$")
_INT_RE = re.compile(r"^-?\d+$")


def _tokenize(text: str):
    tokens = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split(";", 1)[0]
        for tok in re.findall(r"\(|\)|[^\s()]+", line):
            tokens.append((tok, lineno))
    return tokens


def _read_forms(text: str) -> list:
    tokens = _tokenize(text)
    pos = 0

    def read():
        nonlocal pos
        tok, line = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise ParseError(f"line {line}: unclosed parenthesis")
                if tokens[pos][0] == ")":
                    pos += 1
                    return ("list", line, items)
                items.append(read())
        if tok == ")":
            raise ParseError(f"line {line}: unexpected ')'")
        return ("atom", line, tok)

    forms = []
    while pos < len(tokens):
        forms.append(read())
    return forms


def _atom(form, what: str) -> str:
    if form[0] != "atom":
        raise ParseError(f"line {form[1]}: expected {what}")
    return form[2]


def _split_args(kind: GateKind, args: list, line: int):
    nq = kind.arity if kind.arity is not None else len(args)
    if len(args) != nq + kind.param_count:
        raise ParseError(
            f"line {line}: {kind.value} expects {nq} operand(s) and "
            f"{kind.param_count} parameter(s), got {len(args)} argument(s)"
        )
    return args[:nq], args[nq:]


def _parse_kind(form) -> GateKind:
    name = _atom(form, "a gate name")
    try:
        return GateKind.parse(name)
    except ValueError:
        raise ParseError(f"line {form[1]}: unknown gate {name!r}") from None


def _parse_int(form) -> int:
    tok = _atom(form, "a qubit index")
    if not _INT_RE.match(tok):
        raise ParseError(f"line {form[1]}: expected a qubit index, got {tok!r}")
    return int(tok)


def _parse_float(form) -> float:
    tok = _atom(form, "a parameter")
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"line {form[1]}: bad parameter {tok!r}") from None


def _parse_gate(form) -> GateApplication:
    if form[0] != "list" or not form[2]:
        raise ParseError(f"line {form[1]}: expected a gate form like (HADAMARD 0)")
    _, line, items = form
    kind = _parse_kind(items[0])
    qs, ps = _split_args(kind, items[1:], line)
    try:
        return GateApplication(kind, tuple(_parse_int(q) for q in qs), tuple(_parse_float(x) for x in ps))
    except GateError as exc:
        raise ParseError(f"line {line}: {exc}") from None


def _parse_tree(form) -> TreeNode:
    if form[0] == "atom":
        return Leaf(_parse_int(form))
    _, line, items = form
    if not items:
        raise ParseError(f"line {line}: empty form")
    kind = _parse_kind(items[0])
    args = items[1:]
    try:
        if kind.arity is None:
            return GateNode(kind, fixed=tuple(_parse_int(a) for a in args))
        cs, ps = _split_args(kind, args, line)
        return GateNode(kind, tuple(_parse_tree(c) for c in cs), tuple(_parse_float(x) for x in ps))
    except GateError as exc:
        raise ParseError(f"line {line}: {exc}") from None


def _parse_lt(forms: list) -> LTNode:
    segment, branch, left, right = [], None, None, None
    for i, form in enumerate(forms):
        head = form[2][0][2] if form[0] == "list" and form[2] and form[2][0][0] == "atom" else None
        if head is not None and head.upper() == "BRANCH":
            if i != len(forms) - 1:
                raise ParseError(f"line {form[1]}: BRANCH must be the last form of a segment")
            items = form[2]
            if len(items) < 2:
                raise ParseError(f"line {form[1]}: BRANCH needs a qubit index")
            branch = _parse_int(items[1])
            for child in items[2:]:
                if child[0] != "list" or not child[2] or child[2][0][0] != "atom":
                    raise ParseError(f"line {child[1]}: expected (LEFT ...) or (RIGHT ...)")
                label = child[2][0][2].upper()
                body = _parse_lt(child[2][1:])
                if label == "LEFT":
                    left = body
                elif label == "RIGHT":
                    right = body
                else:
                    raise ParseError(f"line {child[1]}: expected LEFT or RIGHT, got {label}")
            left = left if left is not None else LTNode()
            right = right if right is not None else LTNode()
        else:
            segment.append(_parse_gate(form))
    return LTNode(tuple(segment), branch, left, right)


def _max_index(p) -> int:
    if isinstance(p, LinearProgram):
        return max((q for g in p.gates for q in g.qubits), default=0)
    return 0


def parse_text(text: str, structure: str | None = None, num_qubits: int | None = None) -> Program:
    """Parse the s-expression notation produced by :func:`render_text`.

    A leading ``;; evoq structure=... qubits=...`` line supplies defaults for
    both arguments; otherwise the structure defaults to linear and the
    register to the highest referenced qubit plus one.
    """
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    m = _HEADER_RE.match(first)
    if m:
        meta = dict(kv.split("=", 1) for kv in m.group(1).split() if "=" in kv)
        structure = structure or meta.get("structure")
        if num_qubits is None and "qubits" in meta:
            num_qubits = int(meta["qubits"])
    structure = structure or "linear"
    forms = _read_forms(text)
    try:
        if structure == "linear":
            gates = tuple(_parse_gate(f) for f in forms)
            n = num_qubits or max((q for g in gates for q in g.qubits), default=0) + 1
            return LinearProgram(n, gates)
        if structure == "tree":
            if len(forms) != 1:
                raise ParseError("a tree program is a single top-level form")
            root = _parse_tree(forms[0])
            if num_qubits is None:
                leaves = [x.qubit for x in _iter_tree(root) if isinstance(x, Leaf)]
                fixed = [q for x in _iter_tree(root) if isinstance(x, GateNode) for q in x.fixed]
                num_qubits = max(leaves + fixed, default=0) + 1
            return TreeProgram(num_qubits, root)
        if structure == "linear-tree":
            root = _parse_lt(forms)
            if num_qubits is None:
                used = [q for nd in iter_lt_nodes(root) for g in nd.segment for q in g.qubits]
                used += [nd.branch for nd in iter_lt_nodes(root) if nd.branch is not None]
                num_qubits = max(used, default=0) + 1
            return LinearTreeProgram(num_qubits, root)
    except GateError as exc:
        raise ParseError(str(exc)) from None
    raise ParseError(f"unknown structure {structure!r}")


# --------------------------------------------------------------------------
# JSON

def _gate_json(app: GateApplication) -> dict:
    return {"gate": app.kind.value, "qubits": list(app.qubits), "params": list(app.params)}


def _gate_from_json(d: dict) -> GateApplication:
    return GateApplication(GateKind.parse(d["gate"]), tuple(d["qubits"]), tuple(d.get("params", ())))


def _tree_json(node: TreeNode):
    if isinstance(node, Leaf):
        return node.qubit
    d = {"gate": node.kind.value}
    if node.fixed:
        d["qubits"] = list(node.fixed)
    else:
        d["children"] = [_tree_json(c) for c in node.children]
    if node.params:
        d["params"] = list(node.params)
    return d


def _tree_from_json(d) -> TreeNode:
    if isinstance(d, int):
        return Leaf(d)
    kind = GateKind.parse(d["gate"])
    return GateNode(
        kind,
        tuple(_tree_from_json(c) for c in d.get("children", ())),
        tuple(d.get("params", ())),
        tuple(d.get("qubits", ())),
    )


def _lt_json(node: LTNode | None):
    if node is None:
        return None
    return {
        "segment": [_gate_json(g) for g in node.segment],
        "branch": node.branch,
        "left": _lt_json(node.left),
        "right": _lt_json(node.right),
    }


def _lt_from_json(d) -> LTNode | None:
    if d is None:
        return None
    return LTNode(
        tuple(_gate_from_json(g) for g in d.get("segment", ())),
        d.get("branch"),
        _lt_from_json(d.get("left")),
        _lt_from_json(d.get("right")),
    )


def to_json(p: Program) -> dict:
    if isinstance(p, LinearProgram):
        return {"structure": "linear", "num_qubits": p.num_qubits, "gates": [_gate_json(g) for g in p.gates]}
    if isinstance(p, TreeProgram):
        return {"structure": "tree", "num_qubits": p.num_qubits, "root": _tree_json(p.root)}
    if isinstance(p, LinearTreeProgram):
        return {"structure": "linear-tree", "num_qubits": p.num_qubits, "root": _lt_json(p.root)}
    raise TypeError(f"not a program: {type(p).__name__}")


def from_json(d: dict) -> Program:
    structure = d.get("structure", "linear")
    n = int(d["num_qubits"])
    if structure == "linear":
        return LinearProgram(n, tuple(_gate_from_json(g) for g in d.get("gates", ())))
    if structure == "tree":
        return TreeProgram(n, _tree_from_json(d["root"]))
    if structure == "linear-tree":
        return LinearTreeProgram(n, _lt_from_json(d["root"]) or LTNode())
    raise ValueError(f"unknown structure {structure!r}")


def dumps(p: Program) -> str:
    return json.dumps(to_json(p), sort_keys=True)
