"""JSON run/study configuration with strict validation.

Every problem is collected before raising, so a user sees all bad keys at
once.  Paths in error messages are dotted (``solver.K``).
"""

from __future__ import annotations

import json
import math
import numbers
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError
from .integrator import SCHEME_ORDER, FlowOracleConfig
from .potential import BUILTINS

DEFAULTS = {
    "potential": {"name": "double-well", "params": {}, "box": None},
    "solver": {
        "h": None,
        "K": 1.5,
        "dt": 1e-3,
        "integrator": "euler",
        "max_steps": 100_000,
        "tol_residual": 1e-6,
        "tol_displacement": 1e-8,
        "grad_tol": 1e-3,
        "eig_tol": 1e-8,
        "oracle": {"abs_tol": 1e-10, "rel_tol": 1e-10},
    },
    "init": {
        "kind": "linear",
        "n_images": 32,
        "amplitude": 0.0,
        "seed": 0,
        "endpoints": None,
    },
    "output": {"report": None, "trace": None, "plotdata": None},
}

POTENTIAL_PARAMS = {
    "quadratic": {"dim"},
    "double-well": {"a", "c"},
    "mueller-brown": set(),
}

INIT_KINDS = ("linear", "arc", "perturbed")


@dataclass
class RunConfigFile:
    potential: dict
    solver: dict
    init: dict
    output: dict

    def oracle(self) -> FlowOracleConfig:
        o = self.solver["oracle"]
        return FlowOracleConfig(o["abs_tol"], o["rel_tol"])

    def to_dict(self):
        return {
            "potential": self.potential,
            "solver": self.solver,
            "init": self.init,
            "output": self.output,
        }


@dataclass
class StudyConfigFile:
    potential: dict
    solver: dict
    grid: dict
    init: dict
    reference: dict
    output: dict = field(default_factory=dict)


def load_json(text: str) -> dict:
    """JSON object from text; syntax errors become ParseError with a position."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ParseError("top level must be a JSON object", 1, 1)
    return data


class _Checker:
    def __init__(self):
        self.errors = []

    def fail(self, path, msg):
        self.errors.append((path, msg))

    def merge(self, given, defaults, path):
        """Defaults overlaid with ``given``; unknown keys are reported."""
        if given is None:
            given = {}
        if not isinstance(given, dict):
            self.fail(path, "must be an object")
            return dict(defaults)
        out = dict(defaults)
        for k, v in given.items():
            if k not in defaults:
                self.fail(f"{path}.{k}", "unknown key")
                continue
            if isinstance(defaults[k], dict) and k != "params":
                out[k] = self.merge(v, defaults[k], f"{path}.{k}")
            else:
                out[k] = v
        return out

    def number(self, d, key, path, *, positive=False, greater=None, integer=False, optional=False):
        v = d.get(key)
        full = f"{path}.{key}"
        if v is None:
            if not optional:
                self.fail(full, "required")
            return
        if isinstance(v, bool) or not isinstance(v, numbers.Real) or not math.isfinite(v):
            self.fail(full, "must be a finite number")
            return
        if integer and int(v) != v:
            self.fail(full, "must be an integer")
        if positive and not v > 0:
            self.fail(full, f"must satisfy {key} > 0")
        if greater is not None and not v > greater:
            self.fail(full, f"must satisfy {key} > {greater:g}")

    def choice(self, d, key, path, options):
        if d.get(key) not in options:
            self.fail(f"{path}.{key}", f"must be one of {list(options)}")


def _check_potential(c: _Checker, pot: dict):
    name = pot.get("name")
    if name not in BUILTINS:
        c.fail("potential.name", f"must be one of {sorted(BUILTINS)}")
        return
    params = pot.get("params") or {}
    if not isinstance(params, dict):
        c.fail("potential.params", "must be an object")
    else:
        for k, v in params.items():
            if k not in POTENTIAL_PARAMS[name]:
                c.fail(f"potential.params.{k}", f"unknown parameter for {name}")
            elif k == "dim":
                c.number(params, k, "potential.params", positive=True, integer=True)
            else:
                c.number(params, k, "potential.params", positive=True)
    box = pot.get("box")
    if box is not None:
        if not isinstance(box, dict) or set(box) != {"lo", "hi"}:
            c.fail("potential.box", "must be an object with keys lo and hi")
        else:
            lo, hi = box["lo"], box["hi"]
            if not (isinstance(lo, list) and isinstance(hi, list) and len(lo) == len(hi)):
                c.fail("potential.box", "lo and hi must be lists of equal length")
            elif any(not b > a for a, b in zip(lo, hi)):
                c.fail("potential.box", "need lo < hi on every axis")


def _check_solver(c: _Checker, s: dict, require_h=False):
    c.number(s, "h", "solver", positive=True, optional=not require_h)
    c.number(s, "K", "solver", greater=1)
    c.number(s, "dt", "solver", positive=True)
    c.choice(s, "integrator", "solver", tuple(SCHEME_ORDER))
    c.number(s, "max_steps", "solver", positive=True, integer=True)
    for k in ("tol_residual", "tol_displacement", "grad_tol", "eig_tol"):
        c.number(s, k, "solver", positive=True)
    for k in ("abs_tol", "rel_tol"):
        c.number(s["oracle"], k, "solver.oracle", positive=True)


def _check_init(c: _Checker, i: dict):
    c.choice(i, "kind", "init", INIT_KINDS)
    c.number(i, "n_images", "init", integer=True, greater=1)
    c.number(i, "amplitude", "init")
    if i.get("amplitude") is not None and isinstance(i["amplitude"], numbers.Real) and i["amplitude"] < 0:
        c.fail("init.amplitude", "must be >= 0")
    c.number(i, "seed", "init", integer=True)
    ends = i.get("endpoints")
    if ends is not None and not (isinstance(ends, list) and len(ends) == 2):
        c.fail("init.endpoints", "must be a list of two points")


def parse_config(text: str) -> RunConfigFile:
    """Parse and validate a solve config, filling defaults."""
    data = load_json(text)
    c = _Checker()
    for k in data:
        if k not in DEFAULTS:
            c.fail(k, "unknown key")
    pot = c.merge(data.get("potential"), DEFAULTS["potential"], "potential")
    if "potential" not in data or "name" not in (data.get("potential") or {}):
        c.fail("potential.name", "required")
    solver = c.merge(data.get("solver"), DEFAULTS["solver"], "solver")
    init = c.merge(data.get("init"), DEFAULTS["init"], "init")
    output = c.merge(data.get("output"), DEFAULTS["output"], "output")
    _check_potential(c, pot)
    _check_solver(c, solver)
    _check_init(c, init)
    if c.errors:
        raise ValidationError(c.errors)
    return RunConfigFile(pot, solver, init, output)


STUDY_DEFAULTS = {
    "potential": DEFAULTS["potential"],
    "solver": {**DEFAULTS["solver"], "h": 0.1},
    "grid": {"h": None, "dt": None, "schemes": ["euler"]},
    "init": {"kind": "perturbed", "amplitude": 0.2, "seed": 0},
    "reference": {"kind": "analytic", "n_images": 256, "dt": None, "max_steps": None},
    "output": {"table": None, "plotdata": None},
}


def parse_study_config(text: str) -> StudyConfigFile:
    data = load_json(text)
    c = _Checker()
    for k in data:
        if k not in STUDY_DEFAULTS:
            c.fail(k, "unknown key")
    parts = {k: c.merge(data.get(k), STUDY_DEFAULTS[k], k) for k in STUDY_DEFAULTS}
    if "name" not in (data.get("potential") or {}):
        c.fail("potential.name", "required")
    _check_potential(c, parts["potential"])
    _check_solver(c, parts["solver"])
    grid = parts["grid"]
    for k in ("h", "dt"):
        vals = grid.get(k)
        if not (isinstance(vals, list) and vals and all(
                isinstance(v, numbers.Real) and not isinstance(v, bool) and v > 0 for v in vals)):
            c.fail(f"grid.{k}", "must be a non-empty list of positive numbers")
    schemes = grid.get("schemes")
    if not (isinstance(schemes, list) and schemes and all(s in SCHEME_ORDER for s in schemes)):
        c.fail("grid.schemes", f"must be a non-empty list drawn from {list(SCHEME_ORDER)}")
    c.choice(parts["init"], "kind", "init", INIT_KINDS)
    c.number(parts["init"], "amplitude", "init")
    c.number(parts["init"], "seed", "init", integer=True)
    ref = parts["reference"]
    c.choice(ref, "kind", "reference", ("analytic", "fine-run"))
    c.number(ref, "n_images", "reference", integer=True, greater=1)
    c.number(ref, "dt", "reference", positive=True, optional=True)
    c.number(ref, "max_steps", "reference", positive=True, integer=True, optional=True)
    if c.errors:
        raise ValidationError(c.errors)
    return StudyConfigFile(**parts)


def defaults_text() -> str:
    return json.dumps(DEFAULTS, indent=2)
