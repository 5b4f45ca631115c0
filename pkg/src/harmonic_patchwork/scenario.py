"""Scenario files: JSON schema, defaults and semantic validation.

Complex numbers are ``[re, im]`` pairs and polynomials are lists of such
pairs in ascending degree.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any

import jsonschema

from .analytic import AnalyticFamily, ComplexPolynomial, Window
from .errors import ConfigError, FamilyError
from .grid import GridWindow

COMMANDS = (
    "analyze-point",
    "classify",
    "trace-boundary",
    "verify-positivity",
    "verify-subharmonic",
    "flux-check",
    "reconstruct-cauchy",
    "reachability",
    "coverage",
    "counterexample",
    "monotonicity",
)

DEFAULTS = {"epsilon_cells": 6.0, "tie_tolerance": 0.0, "fit_degree": 4, "subsamples": 8}

_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_index = {"type": "integer", "minimum": 1}
_box = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}
_disk = {
    "type": "object",
    "properties": {"center": _pair, "radius": {"type": "number", "exclusiveMinimum": 0}},
    "required": ["center", "radius"],
    "additionalProperties": False,
}
_labeling = {
    "oneOf": [
        {"enum": ["max", "counterexample"]},
        {
            "type": "object",
            "properties": {
                "half_plane": {
                    "type": "object",
                    "properties": {"normal": _pair, "inside": _index, "outside": _index, "through": _pair},
                    "required": ["normal", "inside", "outside"],
                    "additionalProperties": False,
                }
            },
            "required": ["half_plane"],
            "additionalProperties": False,
        },
    ]
}
_output = {"type": "string", "minLength": 1}
_expect = {"enum": [True, False, "any"]}


def _command(name: str, props: dict, required=()) -> dict:
    base = {"command": {"const": name}, "note": {"type": "string"}, "expect": _expect}
    base.update(props)
    return {
        "type": "object",
        "properties": base,
        "required": ["command", *required],
        "additionalProperties": False,
    }


COMMAND_SCHEMAS = {
    "analyze-point": _command(
        "analyze-point",
        {
            "point": _pair,
            "active": {"oneOf": [{"enum": ["all", "grid"]}, {"type": "array", "items": _index, "minItems": 1}]},
            "radius_cells": {"type": "number", "exclusiveMinimum": 0},
            "output": _output,
        },
        ["point"],
    ),
    "classify": _command("classify", {"labeling": _labeling, "output": _output}),
    "trace-boundary": _command("trace-boundary", {"labeling": _labeling, "output": _output}),
    "verify-positivity": _command(
        "verify-positivity",
        {
            "labeling": _labeling,
            "epsilon_cells": {"type": "number", "exclusiveMinimum": 0},
            "subsamples": {"type": "integer", "minimum": 1},
            "output": _output,
        },
    ),
    "verify-subharmonic": _command(
        "verify-subharmonic",
        {"labeling": _labeling, "epsilon_cells": {"type": "number", "exclusiveMinimum": 0}, "output": _output},
    ),
    "flux-check": _command(
        "flux-check",
        {
            "labeling": _labeling,
            "epsilon_cells": {"type": "number", "exclusiveMinimum": 0},
            "subsamples": {"type": "integer", "minimum": 1},
            "band_cells": {"type": "number", "exclusiveMinimum": 0},
            "portions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {"pair": {"type": "array", "items": _index, "minItems": 2, "maxItems": 2}, "box": _box},
                    "required": ["box"],
                    "additionalProperties": False,
                },
            },
            "disks": {"type": "array", "items": _disk},
            "tolerance": {"type": "number", "exclusiveMinimum": 0},
            "disk_tolerance": {"type": "number", "exclusiveMinimum": 0},
        },
    ),
    "reconstruct-cauchy": _command(
        "reconstruct-cauchy",
        {
            "labeling": _labeling,
            "support": _disk,
            "test_disk": _disk,
            "test_points": {"type": "integer", "minimum": 1},
            "clearance": {"type": "number", "minimum": 0},
            "fit_degree": {"type": "integer", "minimum": 0},
            "tolerance": {"type": "number", "exclusiveMinimum": 0},
        },
        ["support", "test_disk"],
    ),
    "reachability": _command(
        "reachability",
        {"point": _pair, "baseline": _index, "nx": {"type": "integer", "minimum": 8}, "output": _output},
        ["point"],
    ),
    "coverage": _command(
        "coverage",
        {
            "point": _pair,
            "baseline": _index,
            "target_box": _box,
            "sequence": {"type": "array", "items": _pair, "minItems": 1},
            "nx": {"type": "integer", "minimum": 8},
        },
        ["point", "target_box", "sequence"],
    ),
    "counterexample": _command("counterexample", {"output": _output}),
    "monotonicity": _command(
        "monotonicity",
        {
            "labeling": _labeling,
            "baseline": _index,
            "paths": {"type": "integer", "minimum": 1},
            "path_length": {"type": "number", "exclusiveMinimum": 0},
            "start_radius": {"type": "number", "exclusiveMinimum": 0},
            "epsilon_cells": {"type": "number", "exclusiveMinimum": 0},
        },
    ),
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "family": {
            "type": "object",
            "properties": {
                "members": {"type": "array", "items": {"type": "array", "items": _pair}},
                "base_point": _pair,
                "window": {
                    "type": "object",
                    "properties": {
                        "origin": _pair,
                        "width": {"type": "number", "exclusiveMinimum": 0},
                        "height": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "required": ["origin", "width", "height"],
                    "additionalProperties": False,
                },
                "grid": {
                    "type": "object",
                    "properties": {"nx": {"type": "integer", "minimum": 8}, "ny": {"type": "integer", "minimum": 8}},
                    "required": ["nx"],
                    "additionalProperties": False,
                },
            },
            "required": ["members", "window", "grid"],
            "additionalProperties": False,
        },
        "defaults": {
            "type": "object",
            "properties": {
                "epsilon_cells": {"type": "number", "exclusiveMinimum": 0},
                "tie_tolerance": {"type": "number", "minimum": 0},
                "fit_degree": {"type": "integer", "minimum": 0},
                "subsamples": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "commands": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"command": {"enum": list(COMMANDS)}},
                "required": ["command"],
            },
        },
    },
    "required": ["family", "commands"],
    "additionalProperties": False,
}


@dataclass
class Scenario:
    raw: dict
    family: AnalyticFamily
    grid: GridWindow
    defaults: dict
    commands: list[dict]
    seed: int
    name: str


def _complex(pair) -> complex:
    return complex(pair[0], pair[1])


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else ""


def _validate(doc: Any, schema: dict, prefix: tuple = ()):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _pointer(prefix + tuple(e.absolute_path)))


def _labeling_indices(spec) -> list[int]:
    if isinstance(spec, dict):
        hp = spec["half_plane"]
        return [hp["inside"], hp["outside"]]
    return []


def validate_config(raw: str) -> Scenario:
    """Parse and check a scenario; raises ConfigError with a location on failure."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    _validate(doc, SCHEMA)
    for n, cmd in enumerate(doc["commands"]):
        _validate(cmd, COMMAND_SCHEMAS[cmd["command"]], ("commands", n))
    fam = doc["family"]
    members = [ComplexPolynomial.from_pairs(m) for m in fam["members"]]
    r = len(members)
    if r < 2:
        raise ConfigError(f"a family needs r >= 2 members, got {r}", "/family/members")
    for a in range(r):
        for b in range(a + 1, r):
            if members[a] == members[b]:
                raise ConfigError(f"members {a + 1} and {b + 1} are identical polynomials", f"/family/members/{b}")
    w = fam["window"]
    x0, y0 = w["origin"]
    window = Window(x0, y0, x0 + w["width"], y0 + w["height"])
    base = _complex(fam.get("base_point", [0.0, 0.0]))
    try:
        family = AnalyticFamily(tuple(members), base, window)
    except FamilyError as exc:
        raise ConfigError(str(exc), "/family/base_point") from None
    nx = fam["grid"]["nx"]
    ny = fam["grid"].get("ny", round(nx * w["height"] / w["width"]))
    try:
        grid = GridWindow(window.origin, window.width, window.height, nx, ny)
    except ValueError as exc:
        raise ConfigError(str(exc), "/family/grid") from None
    defaults = dict(DEFAULTS)
    defaults.update(doc.get("defaults", {}))
    outputs: dict[str, int] = {}
    commands = []
    for n, cmd in enumerate(doc["commands"]):
        where = f"/commands/{n}"
        idx = _labeling_indices(cmd.get("labeling"))
        idx += [cmd[k] for k in ("baseline",) if k in cmd]
        idx += list(cmd["active"]) if isinstance(cmd.get("active"), list) else []
        idx += [i for p in cmd.get("portions", []) for i in p.get("pair", [])]
        for i in idx:
            if not 1 <= i <= r:
                raise ConfigError(f"member index {i} out of range 1..{r}", where)
        if cmd.get("labeling") == "counterexample" or cmd["command"] == "counterexample":
            if r != 3:
                raise ConfigError("the counterexample labeling needs a three-member family", where)
        if "output" in cmd:
            if cmd["output"] in outputs:
                raise ConfigError(f"output {cmd['output']!r} already used by command {outputs[cmd['output']]}", where + "/output")
            outputs[cmd["output"]] = n
        full = copy.deepcopy(cmd)
        for key in ("epsilon_cells", "subsamples", "fit_degree"):
            if key in COMMAND_SCHEMAS[cmd["command"]]["properties"]:
                full.setdefault(key, defaults[key])
        full.setdefault("expect", True)
        commands.append(full)
    return Scenario(doc, family, grid, defaults, commands, int(doc.get("seed", 0)), doc.get("name", "scenario"))
