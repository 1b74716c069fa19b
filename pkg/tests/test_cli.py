import csv
import json
from pathlib import Path

import pytest

from evoq import config as config_mod
from evoq.cli import main
from evoq.evolve import ConfigError

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "problem": {"name": "entanglement", "n": 2},
    "fitness": {"scheme": "rubinstein"},
    "population_size": 30,
    "selection": {"method": "fitness_proportional"},
    "max_generations": 20,
    "target": {"raw_error": 1e-6},
    "seed": 1,
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_simulate_hadamard(tmp_path, capsys):
    prog = tmp_path / "h.txt"
    prog.write_text("(HADAMARD 0)\n")
    assert main(["simulate", str(prog), "--amplitudes"]) == 0
    out = capsys.readouterr().out
    assert out.count("+0.7071+0.0000j") == 2


def test_simulate_with_oracle_and_measurement(tmp_path, capsys):
    prog = tmp_path / "d.txt"
    prog.write_text("(X 1) (HADAMARD 0) (HADAMARD 1) (ORACLE 0 1) (HADAMARD 0) (MEASURE 0)")
    assert main(["simulate", str(prog), "--oracle", "01"]) == 0
    out = capsys.readouterr().out
    assert "[q0=1] p=1.000000" in out and "expected oracle calls: 1" in out


def test_simulate_teleport(capsys):
    assert main(["simulate", "@teleport", "--random-input", "--seed", "4"]) == 0
    assert "fidelity 1 within" in capsys.readouterr().out


def test_simulate_malformed(tmp_path, capsys):
    prog = tmp_path / "bad.txt"
    prog.write_text("(HADAMARD 0)\n(HADAMRD 1)\n")
    assert main(["simulate", str(prog)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["simulate", str(tmp_path / "missing.txt")]) == 1


def test_simulate_json_program(tmp_path, capsys):
    prog = tmp_path / "p.json"
    prog.write_text(json.dumps({"structure": "linear", "num_qubits": 2,
                                "gates": [{"gate": "HADAMARD", "qubits": [0]}, {"gate": "CNOT", "qubits": [0, 1]}]}))
    assert main(["simulate", str(prog), "--init", "00"]) == 0
    out = capsys.readouterr().out
    assert "|00>  0.500000" in out and "|11>  0.500000" in out


def test_evolve_writes_report_and_csv(tmp_path):
    out = tmp_path / "run"
    assert main(["evolve", write(tmp_path, SMALL), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["terminated"] == "target"
    assert report["best"]["text"].startswith("(")
    rows = list(csv.DictReader((out / "fitness.csv").open()))
    assert len(rows) == len(report["rows"])
    assert "best_raw_error" in rows[0]


def test_evolve_budget_exit_code(tmp_path):
    doc = {**SMALL, "problem": {"name": "entanglement", "n": 3}, "target": {"raw_error": -1},
           "max_generations": 2}
    assert main(["evolve", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2


def test_evolve_repetitions(tmp_path):
    doc = {**SMALL, "repetitions": 3}
    out = tmp_path / "reps"
    assert main(["evolve", write(tmp_path, doc), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["successes"] == 3 and summary["seeds"] == [1, 2, 3]
    assert all((out / f"rep-{i:03d}" / "report.json").exists() for i in range(3))


def test_report_reproducible_from_embedded_config(tmp_path):
    out = tmp_path / "a"
    doc = {**SMALL, "problem": {"name": "entanglement", "n": 3}, "max_generations": 5}
    main(["evolve", write(tmp_path, doc), "--out", str(out)])
    first = json.loads((out / "report.json").read_text())
    again = tmp_path / "b"
    main(["evolve", write(tmp_path, first["config"], "echo.json"), "--out", str(again)])
    second = json.loads((again / "report.json").read_text())
    assert first["rows"] == second["rows"] and first["seed"] == second["seed"]


@pytest.mark.parametrize("mutation,field", [
    (lambda d: d.pop("fitness"), "fitness"),
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d.update(p_mutation=2), "p_mutation"),
    (lambda d: d["problem"].update(gate_set=["HADAMARD", "NOPE"]), "gate_set"),
    (lambda d: d.update(fitness={"scheme": "spector00"}), "selection"),
])
def test_invalid_config_exit_1(tmp_path, capsys, mutation, field):
    doc = json.loads(json.dumps(SMALL))
    mutation(doc)
    assert main(["evolve", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1
    assert field in capsys.readouterr().err


def test_validate_reports_every_field():
    msgs = config_mod.validate({"problem": {"name": "x"}, "fitness": {"scheme": "y"}, "extra": 1})
    assert len(msgs) == 3
    assert any(m.startswith("problem.name") for m in msgs)
    assert any(m.startswith("fitness.scheme") for m in msgs)


def test_shipped_configs_are_valid():
    for path in sorted((ROOT / "configs").glob("*.json")):
        config_mod.load(path)
    with pytest.raises(ConfigError):
        config_mod.load(ROOT / "configs" / "missing.json")


def test_docs_schema_matches_package():
    assert (ROOT / "docs" / "experiment.schema.json").read_text() == \
        (ROOT / "src" / "evoq" / "schema" / "experiment.schema.json").read_text()


@pytest.mark.parametrize("suite", ["gates", "teleport", "grover", "all"])
def test_verify_suites(suite, capsys):
    assert main(["verify", suite]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS" in out


def test_verify_grover_reports_reference_value(capsys):
    main(["verify", "grover"])
    assert "P = 0.9613" in capsys.readouterr().out


def test_usage_errors_exit_1():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
