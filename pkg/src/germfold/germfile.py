"""Germ definition files (JSON, ``"schema": 1``) and the built-in corpus."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .obstruction import GermError, GermSystem, build_germ_system
from .parser import parse_poly
from .wgeom import make_weight_system

SCHEMA_VERSION = 1

DEFAULT_OPTIONS = {
    "K": 12,
    "tol": 1e-9,
    "seed": 42,
    "epsilons": [0.3, 1.0],
    "samples": 10_000,
    "link_points": 50,
    "link_min_coeff": 1e-3,
    "allow_obstructed": False,
    "expect_sigma": None,
}


class GermFileError(ValueError):
    """Malformed germ definition (before any mathematical validation)."""


@dataclass
class GermDefinition:
    name: str
    variables: list[str]
    weights: list[int]
    equations: list[str]
    perturbations: list[str]
    options: dict = field(default_factory=dict)
    source: str = ""

    def opt(self, key):
        return self.options.get(key, DEFAULT_OPTIONS.get(key))

    def to_json(self) -> dict:
        return {"schema": SCHEMA_VERSION, "name": self.name, "variables": self.variables,
                "weights": self.weights, "equations": self.equations,
                "perturbations": self.perturbations, "options": self.options}

    def build(self) -> GermSystem:
        """Parse and validate; raises a GermError or parser error on the first failure."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ws = make_weight_system(self.weights)
        f = [parse_poly(e, self.variables) for e in self.equations]
        g = [parse_poly(e, self.variables) for e in self.perturbations]
        return build_germ_system(ws, f, g, self.variables, self.name)


def germ_from_dict(d: dict, source: str = "") -> GermDefinition:
    if not isinstance(d, dict):
        raise GermFileError("germ definition must be a JSON object")
    if d.get("schema") != SCHEMA_VERSION:
        raise GermFileError(f"unsupported schema {d.get('schema')!r} (expected {SCHEMA_VERSION})")
    for key in ("name", "variables", "weights", "equations", "perturbations"):
        if key not in d:
            raise GermFileError(f"missing field {key!r}")
    var, w, eq, pert = d["variables"], d["weights"], d["equations"], d["perturbations"]
    if len(var) != len(w):
        raise GermFileError(f"{len(var)} variables but {len(w)} weights")
    if len(set(var)) != len(var):
        raise GermFileError("duplicate variable names")
    if len(eq) != len(pert):
        raise GermFileError(f"{len(eq)} equations but {len(pert)} perturbations")
    unknown = set(d.get("options", {})) - set(DEFAULT_OPTIONS)
    if unknown:
        raise GermFileError(f"unknown options {sorted(unknown)}")
    return GermDefinition(str(d["name"]), list(var), [int(x) for x in w], list(eq), list(pert),
                          dict(d.get("options", {})), source)


def load_germ(path) -> GermDefinition:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise GermFileError(f"{path}: invalid JSON ({e})") from e
    return germ_from_dict(data, str(path))


def corpus_names() -> list[str]:
    root = resources.files("germfold") / "corpus"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_corpus_germ(name: str) -> GermDefinition:
    root = resources.files("germfold") / "corpus"
    text = (root / f"{name}.json").read_text()
    return germ_from_dict(json.loads(text), f"corpus:{name}")


def load_corpus() -> list[GermDefinition]:
    return [load_corpus_germ(n) for n in corpus_names()]


__all__ = ["GermDefinition", "GermFileError", "GermError", "load_germ", "load_corpus",
           "load_corpus_germ", "corpus_names", "germ_from_dict", "DEFAULT_OPTIONS"]
