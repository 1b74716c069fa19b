"""Command-line front end: ``evoq simulate | evolve | verify``.

Exit codes: 0 success, 1 usage or config error, 2 evolution budget exhausted
(``verify`` also returns 2 when a check fails).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import config as config_mod
from .evolve import ConfigError, RunReport, run, with_seed
from .problems import Oracle, teleport
from .program import ParseError, evaluate, from_json, parse_text, render_text
from .qstate import StateError, StateVector, basis_state, random_state
from .verify import SUITES

EXIT_OK, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def fitness_csv(report: RunReport) -> str:
    if not report.rows:
        return ""
    names = list(report.rows[0]["best"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "evaluations"] + [f"best_{n}" for n in names]
               + [f"median_{n}" for n in names] + ["mean_gates"])
    for row in report.rows:
        w.writerow([row["generation"], row["evaluations"]]
                   + [repr(row["best"][n]) for n in names]
                   + [repr(row["median"][n]) for n in names] + [repr(row["mean_gates"])])
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# simulate


def _load_program(path: str, structure: str | None, qubits: int | None):
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return from_json(json.loads(text))
    return parse_text(text, structure, qubits)


def _initial_state(args, n: int) -> StateVector:
    if args.random_input:
        return random_state(n, np.random.default_rng(args.seed))
    bits = args.init or "0" * n
    if len(bits) != n or set(bits) - {"0", "1"}:
        raise ValueError(f"--init must be {n} binary digits, got {bits!r}")
    return basis_state(n, int(bits, 2))


def _simulate_teleport(args) -> int:
    rng = np.random.default_rng(args.seed)
    alpha, beta = (random_state(1, rng).amplitudes if args.random_input else (1.0, 0.0))
    print(f"message: ({alpha:.6f})|0> + ({beta:.6f})|1>")
    print(f"{'bits':>4}  {'prob':>8}  {'fidelity':>12}")
    worst = 0.0
    for br in teleport(alpha, beta):
        worst = max(worst, abs(1 - br.fidelity))
        print(f"{br.bits:>4}  {br.probability:8.6f}  {br.fidelity:12.10f}")
    print(f"fidelity 1 within {worst:.1e}" if worst <= 1e-10 else f"fidelity error {worst:.3e}")
    return EXIT_OK if worst <= 1e-10 else EXIT_BUDGET


def cmd_simulate(args) -> int:
    if args.program == "@teleport":
        return _simulate_teleport(args)
    prog = _load_program(args.program, args.structure, args.qubits)
    oracle = None
    if args.oracle:
        size = len(args.oracle)
        if size < 2 or size & (size - 1) or set(args.oracle) - {"0", "1"}:
            raise ValueError("--oracle must be a binary truth table of power-of-two length")
        oracle = Oracle(size.bit_length() - 1, tuple(int(c) for c in args.oracle))
    init = _initial_state(args, prog.num_qubits)
    result = evaluate(prog, init, oracle)
    n = prog.num_qubits
    print(render_text(prog, header=True))
    print(f"branches: {len(result.branches)}  expected oracle calls: {result.expected_oracle_calls:g}"
          f"  gates: {result.gate_count}")
    for br in result.branches:
        label = "".join(f"q{q}={b} " for q, b in br.bits).strip() or "(no measurement)"
        print(f"[{label}] p={br.probability:.6f}")
        probs = br.state.probabilities()
        for k in np.flatnonzero(probs > 1e-12):
            line = f"  |{k:0{n}b}>  {probs[k]:.6f}"
            if args.amplitudes:
                a = br.state.amplitudes[k]
                line += f"  {a.real:+.4f}{a.imag:+.4f}j"
            print(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# evolve


def cmd_evolve(args) -> int:
    exp = config_mod.load(args.config)
    if args.repetitions is not None:
        exp.repetitions = args.repetitions
    cfg = exp.evolution
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    out = Path(args.out or exp.output.get("dir") or "evoq-out")
    want_csv = exp.output.get("csv", True)
    reports = []
    for rep in range(exp.repetitions):
        rcfg = with_seed(cfg, cfg.seed + rep)
        report = run(rcfg, jobs=args.jobs)
        reports.append(report)
        where = out if exp.repetitions == 1 else out / f"rep-{rep:03d}"
        doc = report.to_dict()
        doc["repetitions"] = exp.repetitions
        write_atomic(where / "report.json", _dump(doc))
        if want_csv:
            write_atomic(where / "fitness.csv", fitness_csv(report))
        print(f"run {rep} seed {rcfg.seed}: {report.terminated} at generation {report.generations}, "
              f"best {report.best_fitness}, {report.best_gates} gates", file=sys.stderr)
    successes = sum(r.reached_target for r in reports)
    if exp.repetitions > 1:
        summary = {
            "repetitions": exp.repetitions,
            "successes": successes,
            "success_rate": successes / exp.repetitions,
            "seeds": [r.seed for r in reports],
            "terminated": [r.terminated for r in reports],
            "generations": [r.generations for r in reports],
            "better_than_classical": [r.better_than_classical for r in reports],
            "config": exp.to_dict(),
        }
        write_atomic(out / "summary.json", _dump(summary))
        print(f"success rate {successes}/{exp.repetitions}", file=sys.stderr)
    return EXIT_OK if successes == exp.repetitions else EXIT_BUDGET


# --------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = 0
    for name in names:
        kwargs = {"seed": args.seed} if name == "teleport" and args.seed is not None else {}
        for check in SUITES[name](**kwargs):
            print(check.line())
            failed += not check.ok
    print(f"{'all checks passed' if not failed else f'{failed} check(s) failed'}")
    return EXIT_OK if not failed else EXIT_BUDGET


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors share exit code 1 with config errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel fitness evaluations")
    common.add_argument("--out", default=None, help="output directory")

    parser = _Parser(prog="evoq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="run a program exactly")
    sim.add_argument("program", help="program file (s-expression or JSON) or @teleport")
    sim.add_argument("--structure", choices=["linear", "tree", "linear-tree"])
    sim.add_argument("--qubits", type=int)
    sim.add_argument("--init", help="initial basis state as bits, e.g. 010")
    sim.add_argument("--random-input", action="store_true", help="Haar-random initial state")
    sim.add_argument("--oracle", help="oracle truth table, e.g. 0110")
    sim.add_argument("--amplitudes", action="store_true", help="print amplitudes")
    sim.set_defaults(func=cmd_simulate)

    evo = sub.add_parser("evolve", parents=[common], help="evolve programs from a config file")
    evo.add_argument("config")
    evo.add_argument("--repetitions", type=int, default=None)
    evo.set_defaults(func=cmd_evolve)

    ver = sub.add_parser("verify", parents=[common], help="run analytic validation suites")
    ver.add_argument("suite", choices=list(SUITES) + ["all"], nargs="?", default="all")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
