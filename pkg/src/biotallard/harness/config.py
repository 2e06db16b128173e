"""Scenario configuration: a versioned JSON document with one block per module.

Field expressions (forcing, initial data) are strings in ``x``, ``y`` and ``t``
parsed with sympy, e.g. ``"sin(pi*x)*sin(3*t)"``. A forcing component may also
be tabulated as ``{"profile": "<expr in x, y>", "times": [...], "values": [...]}``
(linear interpolation in time).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from ..ade_solver import Forcing, Layout, Probe, SolverConfig, point_probe, separable
from ..discretization import Grid, build_grid
from ..errors import ConfigError
from ..material import MaterialParams
from ..permeability import FitOptions, FitResult, FrequencySample, PermeabilitySeries, fit_series, read_samples_csv

__all__ = ["SCHEMA_VERSION", "MODES", "SCHEMA", "Scenario", "load_config", "parse_config"]

SCHEMA_VERSION = 1
MODES = ("ade", "convolution", "compare", "mms", "check", "fit", "transfer")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_expr = {"type": ["string", "number"]}
_field = {"oneOf": [_expr, {"type": "array", "items": _expr, "minItems": 1, "maxItems": 2}]}
_tabulated = {
    "type": "object",
    "required": ["profile", "times", "values"],
    "properties": {
        "profile": {"oneOf": [_expr, {"type": "array", "items": _expr, "minItems": 1, "maxItems": 2}]},
        "times": {"type": "array", "items": _num, "minItems": 2},
        "values": {"type": "array", "items": _num, "minItems": 2},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["version"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "mode": {"enum": list(MODES)},
        "seed": {"type": "integer"},
        "material": {
            "type": "object",
            "required": ["rho_s", "rho_f", "phi", "alpha", "c0", "eta", "alpha_inf"],
            "properties": {
                **{k: _num for k in ("rho_s", "rho_f", "phi", "alpha", "c0", "eta", "alpha_inf")},
                "lame": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "C": {"type": "array"},
            },
            "additionalProperties": False,
        },
        "permeability": {
            "type": "object",
            "properties": {
                "terms": {
                    "type": "array",
                    "items": {"oneOf": [
                        {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                        {"type": "object", "required": ["c", "d"], "properties": {"c": _pos, "d": _pos}},
                    ]},
                },
                "eta_k": _pos,
                "F": _pos,
                "fit": {
                    "type": "object",
                    "required": ["samples", "N"],
                    "properties": {
                        "samples": {"oneOf": [
                            {"type": "string"},
                            {"type": "array", "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
                        ]},
                        "N": {"type": "integer", "minimum": 1},
                        "max_iter": {"type": "integer", "minimum": 1},
                        "tol": _pos,
                        "static_limit": _pos,
                        "relaxation_bound": _pos,
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "required": ["d", "extents", "cells"],
            "properties": {
                "d": {"enum": [1, 2]},
                "extents": {"type": "array", "items": _num},
                "cells": {"type": "array", "items": {"type": "integer"}},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "required": ["dt", "T"],
            "properties": {
                "dt": _pos, "T": _pos, "theta": _num, "linear_tol": _pos, "blowup": _pos,
                "u0": _field, "v0": _field, "p0": _expr,
            },
            "additionalProperties": False,
        },
        "forcing": {
            "type": "object",
            "properties": {"f": {"oneOf": [_field, _tabulated]}},
            "additionalProperties": False,
        },
        "probes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["field", "index"],
                "properties": {"name": {"type": "string"}, "field": {"type": "string"},
                               "index": {"type": "integer", "minimum": 0}},
                "additionalProperties": False,
            },
        },
        "check": {
            "type": "object",
            "required": ["nu0"],
            "properties": {"nu0": _pos, "d": {"enum": [1, 2]}},
            "additionalProperties": False,
        },
        "compare": {
            "type": "object",
            "required": ["dts"],
            "properties": {"dts": {"type": "array", "items": _pos, "minItems": 2}},
            "additionalProperties": False,
        },
        "mms": {
            "type": "object",
            "required": ["refinements"],
            "properties": {
                "refinements": {"type": "array", "minItems": 3, "items": {
                    "type": "array", "minItems": 2, "maxItems": 2,
                    "prefixItems": [{"type": ["integer", "array"]}, _pos],
                }},
                "theta": _num,
                "T": _pos,
                "kind": {"enum": ["spacetime", "space", "time"]},
            },
            "additionalProperties": False,
        },
        "transfer": {
            "type": "object",
            "required": ["omegas"],
            "properties": {
                "omegas": {"oneOf": [
                    {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                    {"type": "object", "required": ["logspace"],
                     "properties": {"logspace": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}}},
                ]},
                "dt": _pos,
                "theta": _num,
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_REQUIRED = {
    "ade": ("material", "grid", "solver"),
    "convolution": ("material", "grid", "solver"),
    "compare": ("material", "permeability", "grid", "solver", "compare"),
    "mms": ("material", "permeability", "mms"),
    "check": ("material", "permeability", "check"),
    "fit": ("permeability",),
    "transfer": ("material", "permeability", "transfer"),
}

_SYMS = {"x": sympy.Symbol("x"), "y": sympy.Symbol("y"), "t": sympy.Symbol("t")}


def _line_of(text: str, path) -> int | None:
    """Best-effort line number of the JSON element at ``path``."""
    pos = 0
    found = None
    for key in path:
        if isinstance(key, str):
            m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
            if m is None:
                break
            pos = m.end()
            found = m.start()
    return None if found is None else text.count("\n", 0, found) + 1


def _fail(text: str, path, msg: str, source: str):
    line = _line_of(text, path)
    where = f"{source}:{line}" if line else source
    loc = "/".join(str(p) for p in path) or "<root>"
    raise ConfigError(f"{where}: {loc}: {msg}")


def _parse(expr, source: str) -> sympy.Expr:
    try:
        return parse_expr(str(expr), local_dict=dict(_SYMS))
    except Exception as exc:  # sympy raises a wide range of types here
        raise ConfigError(f"{source}: cannot parse expression {expr!r}: {exc}") from exc


def _space_fn(exprs, d: int, source: str):
    """Callable ``fn(x)`` of points ``(m, d)`` returning ``(m, len(exprs))``."""
    args = (_SYMS["x"], _SYMS["y"])[:d]
    parsed = [_parse(e, source) for e in exprs]
    fns = [sympy.lambdify(args, e, "numpy") for e in parsed]

    def fn(x):
        x = np.atleast_2d(x)
        return np.stack([np.broadcast_to(np.asarray(f(*x.T), dtype=float), (len(x),)) for f in fns], axis=-1)

    return fn


def _spacetime_fn(exprs, d: int, source: str):
    args = (_SYMS["t"], _SYMS["x"], _SYMS["y"])[: d + 1]
    parsed = [_parse(e, source) for e in exprs]
    fns = [sympy.lambdify(args, e, "numpy") for e in parsed]

    def fn(t, x):
        x = np.atleast_2d(x)
        return np.stack([np.broadcast_to(np.asarray(f(t, *x.T), dtype=float), (len(x),)) for f in fns], axis=-1)

    return fn


def _components(value, d: int, what: str) -> list:
    comps = value if isinstance(value, list) else [value]
    if len(comps) != d:
        raise ConfigError(f"{what}: expected {d} component(s), got {len(comps)}")
    return comps


@dataclass
class Scenario:
    """Validated configuration plus builders for the runtime objects."""

    data: dict
    text: str = ""
    source: str = "<config>"
    base_dir: Path = field(default_factory=Path.cwd)
    fit_result: FitResult | None = None

    @property
    def mode(self) -> str | None:
        return self.data.get("mode")

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    def require(self, mode: str) -> None:
        """Check that the blocks needed by ``mode`` are present."""
        for block in _REQUIRED[mode]:
            if block not in self.data:
                _fail(self.text, [], f"mode '{mode}' requires a '{block}' block", self.source)
        if mode == "fit" and "fit" not in self.data["permeability"]:
            _fail(self.text, ["permeability"], "mode 'fit' requires permeability/fit", self.source)

    def _wrap(self, path, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            _fail(self.text, path, str(exc), self.source)

    def material(self) -> MaterialParams:
        return self._wrap(["material"], lambda: MaterialParams.from_dict(self.data["material"]))

    def series(self) -> PermeabilitySeries | None:
        """Literal series, or the result of fitting the configured samples."""
        blk = self.data.get("permeability")
        if blk is None:
            return None
        mat = self.material() if "material" in self.data else None
        eta_k = blk.get("eta_k", mat.eta_k if mat else 1.0)
        F = blk.get("F", mat.F if mat else 1.0)
        if "terms" in blk:
            terms = [(t["c"], t["d"]) if isinstance(t, dict) else tuple(t) for t in blk["terms"]]
            return self._wrap(["permeability", "terms"], lambda: PermeabilitySeries(eta_k, F, tuple(terms)))
        if "fit" in blk:
            if self.fit_result is None:
                self.fit_result = self.run_fit(eta_k, F)
            return self.fit_result.series
        _fail(self.text, ["permeability"], "needs 'terms' or 'fit'", self.source)

    def samples(self) -> list[FrequencySample]:
        raw = self.data["permeability"]["fit"]["samples"]
        if isinstance(raw, str):
            path = Path(raw)
            path = path if path.is_absolute() else self.base_dir / path
            return self._wrap(["permeability", "fit", "samples"], lambda: read_samples_csv(path))
        return self._wrap(["permeability", "fit", "samples"],
                          lambda: [FrequencySample(w, complex(re_, im)) for w, re_, im in raw])

    def run_fit(self, eta_k: float = 1.0, F: float = 1.0) -> FitResult:
        blk = self.data["permeability"]["fit"]
        opts = FitOptions(eta_k=eta_k, F=F, **{k: blk[k] for k in
                                                ("max_iter", "tol", "static_limit", "relaxation_bound") if k in blk})
        return fit_series(self.samples(), blk["N"], opts)

    def grid(self) -> Grid:
        g = self.data["grid"]
        return self._wrap(["grid"], lambda: build_grid(g["d"], g["extents"], g["cells"]))

    def solver_config(self, d: int) -> SolverConfig:
        s = dict(self.data["solver"])
        kw = {k: s.pop(k) for k in ("dt", "T", "theta", "linear_tol", "blowup") if k in s}
        for name in ("u0", "v0"):
            if name in s:
                comps = _components(s[name], d, f"solver/{name}")
                kw[name] = _space_fn(comps, d, f"{self.source}: solver/{name}")
        if "p0" in s:
            fn = _space_fn([s["p0"]], d, f"{self.source}: solver/p0")
            kw["p0"] = lambda x, fn=fn: fn(x)[:, 0]
        return self._wrap(["solver"], lambda: SolverConfig(**kw))

    def forcing(self, d: int) -> Forcing | None:
        blk = self.data.get("forcing")
        if not blk or "f" not in blk:
            return None
        f = blk["f"]
        src = f"{self.source}: forcing/f"
        if isinstance(f, dict):
            prof = _space_fn(_components(f["profile"], d, "forcing/f/profile"), d, src)
            if len(f["times"]) != len(f["values"]):
                _fail(self.text, ["forcing", "f"], "times and values differ in length", self.source)
            return Forcing(f=separable(prof, f["times"], f["values"]))
        return Forcing(f=_spacetime_fn(_components(f, d, "forcing/f"), d, src))

    def probes(self, layout: Layout) -> list[Probe]:
        out = []
        sizes = layout.sizes
        for k, p in enumerate(self.data.get("probes", [])):
            if p["field"] not in sizes:
                _fail(self.text, ["probes"], f"unknown field '{p['field']}' (have {sorted(sizes)})", self.source)
            if p["index"] >= sizes[p["field"]]:
                _fail(self.text, ["probes"], f"index {p['index']} out of range for '{p['field']}'", self.source)
            out.append(point_probe(layout, p["field"], p["index"], p.get("name")))
        return out


def parse_config(text: str, source: str = "<config>", base_dir=None) -> Scenario:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        With a ``source:line`` prefix for syntax and schema violations.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        _fail(text, list(err.absolute_path), err.message, source)
    return Scenario(data=data, text=text, source=source, base_dir=Path(base_dir) if base_dir else Path.cwd())


def load_config(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read: {exc}") from exc
    return parse_config(text, str(path), path.parent)
