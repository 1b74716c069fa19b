"""Experiment config files: schema validation and conversion."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .evolve import ConfigError, EvolutionConfig
from .gates import GateKind
from .problems import make_problem

RUN_KEYS = ("repetitions", "output")


def schema() -> dict:
    text = resources.files("evoq").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


@dataclass
class Experiment:
    evolution: EvolutionConfig
    repetitions: int = 1
    output: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = self.evolution.to_dict()
        d["repetitions"] = self.repetitions
        if self.output:
            d["output"] = dict(self.output)
        return d


def _field_path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "(root)"


def validate(doc) -> list[str]:
    """Field-level messages for every schema violation, empty when valid."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    return [f"{_field_path(e)}: {e.message}" for e in errors]


def from_dict(doc: dict, base_dir: Path | None = None) -> Experiment:
    messages = validate(doc)
    if messages:
        raise ConfigError("\n".join(messages))
    doc = dict(doc)
    for name in doc.get("problem", {}).get("gate_set", ()):
        try:
            GateKind.parse(name)
        except ValueError as exc:
            raise ConfigError(f"problem.gate_set: {exc}") from None
    try:
        make_problem(doc["problem"])
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None
    reps = doc.pop("repetitions", 1)
    output = doc.pop("output", {})
    init = doc.get("init")
    if base_dir is not None and init and init.get("seed_file"):
        path = Path(init["seed_file"])
        if not path.is_absolute():
            doc["init"] = {**init, "seed_file": str(base_dir / path)}
    try:
        evo = EvolutionConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return Experiment(evo, reps, output)


def load(path: str | Path) -> Experiment:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(doc, path.parent)
