"""Plain-text experiment configuration.

Grammar: one ``section.key = value`` per line, ``#`` starts a comment, blank
lines are ignored.  Points are written ``(a, b)`` and lists of points as
``(0,0) (4,0) (1,1)``; integer ranges as ``4..10``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fields as fl
from . import geometry as geo
from .errors import ParseError, ValidationError
from .wiener import root_level

KINDS = ("simulate", "couple", "converge", "diagnose")
MAX_LEVEL = 20
MAX_PATHS = 10 ** 6
MAX_ROWS = 10 ** 4

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+$")
_POINT = re.compile(r"\(([^()]*)\)")


@dataclass
class ExperimentConfig:
    kind: str
    values: dict
    lines: dict = dc_field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def N(self) -> int:
        return int(self.values["driver.N"])

    @property
    def T(self) -> float:
        return float(self.values["driver.T"])

    @property
    def seed(self) -> int:
        return int(self.values["driver.seed"])

    @property
    def substeps(self) -> int:
        return int(self.values.get("driver.substeps", 64))

    @property
    def paths(self) -> int:
        return int(self.values.get("ensemble.paths", 1))

    def echo(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in sorted(self.values.items()))


def parse_points(text: str) -> np.ndarray:
    """``(a,b) (c,d)`` -> array (n, 2); a bare ``a, b`` is one point."""
    groups = _POINT.findall(text)
    if not groups:
        if "(" in text or ")" in text:
            raise ValueError(f"unbalanced parentheses in {text!r}")
        groups = [text]
    rows = [[float(c) for c in g.replace(",", " ").split()] for g in groups]
    if len({len(r) for r in rows}) != 1 or not rows[0]:
        raise ValueError(f"points in {text!r} have different lengths")
    return np.array(rows)


def parse_levels(text: str) -> list[int]:
    text = text.strip()
    m = re.fullmatch(r"(\d+)\s*\.\.\s*(\d+)", text)
    if m:
        return list(range(int(m.group(1)), int(m.group(2)) + 1))
    return [int(v) for v in text.replace(",", " ").split()]


def parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _tokens(text: str):
    """Split ``key = value`` lines, collecting every malformed line."""
    values, lines, errors = {}, {}, []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {no}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            errors.append(f"line {no}: malformed key {key!r}")
            continue
        if not val:
            errors.append(f"line {no}: key {key!r} has an empty value")
            continue
        if key in values:
            errors.append(f"line {no}: duplicate key {key!r} (first on line {lines[key]})")
            continue
        values[key] = val
        lines[key] = no
    return values, lines, errors


def _required(kind):
    req = ["domain.kind", "driver.T", "driver.seed"]
    if kind != "converge":
        req.append("driver.N")
    if kind in ("simulate", "converge", "diagnose"):
        req.append("field.kind")
    if kind in ("simulate", "converge"):
        req.append("start.x0")
    if kind == "couple":
        req += ["coupling.kind", "start.x0", "start.y0"]
    if kind == "converge":
        req += ["converge.levels", "converge.f"]
    if kind == "diagnose":
        req.append("diagnose.kind")
    return req


def _check_numbers(values, where, errors):
    def num(key, cast, lo=None, hi=None):
        if key not in values:
            return
        try:
            v = cast(values[key])
        except ValueError:
            errors.append(f"{where(key)}{key}: expected {cast.__name__}, got {values[key]!r}")
            return
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            errors.append(f"{where(key)}{key}: {v} outside [{lo}, {hi}]")

    num("driver.N", int, 0, MAX_LEVEL)
    num("driver.seed", int, 0, 2 ** 64 - 1)
    num("ensemble.paths", int, 1, MAX_PATHS)
    num("ensemble.parallelism", int, 1, 1024)
    num("output.stride", int, 1)
    num("output.max_files", int, 0)
    num("invariant.eps_angle", float, 0.0)
    if "driver.T" in values:
        try:
            root_level(float(values["driver.T"]))
        except ValueError:
            errors.append(f"{where('driver.T')}driver.T: {values['driver.T']!r} is not a "
                          "positive dyadic number")
    if "driver.substeps" in values:
        try:
            s = int(values["driver.substeps"])
            if s < 1 or s & (s - 1):
                raise ValueError
        except ValueError:
            errors.append(f"{where('driver.substeps')}driver.substeps: must be a power of two")
    if "converge.levels" in values:
        try:
            lv = parse_levels(values["converge.levels"])
            if not lv or any(b <= a for a, b in zip(lv, lv[1:])) or lv[-1] > MAX_LEVEL:
                raise ValueError
        except ValueError:
            errors.append(f"{where('converge.levels')}converge.levels: need increasing levels "
                          f"<= {MAX_LEVEL}")


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Parse and validate; ``kind`` overrides ``experiment.kind``."""
    values, lines, errors = _tokens(text)
    if errors:
        raise ParseError(errors)

    def where(key):
        return f"line {lines[key]}: " if key in lines else ""

    cfg_kind = values.get("experiment.kind")
    kind = kind or cfg_kind
    verr = []
    if kind is None:
        raise ValidationError(["experiment.kind: missing"])
    if kind not in KINDS:
        raise ValidationError([f"{where('experiment.kind')}experiment.kind: unknown kind {kind!r}"])
    if cfg_kind is not None and cfg_kind != kind:
        verr.append(f"{where('experiment.kind')}experiment.kind: config says {cfg_kind!r} "
                    f"but the command is {kind!r}")
    for key in _required(kind):
        if key not in values:
            verr.append(f"{key}: missing (required for {kind})")
    _check_numbers(values, where, verr)
    cfg = ExperimentConfig(kind, values, lines)
    if not verr:
        for key, fn in (("domain.kind", build_domain), ("field.kind", build_field)):
            if key in values:
                try:
                    fn(cfg)
                except (ValueError, KeyError) as exc:
                    verr.append(f"{where(key)}{key}: {exc}")
    if verr:
        raise ValidationError(verr)
    return cfg


def build_domain(cfg: ExperimentConfig) -> geo.Domain:
    v = cfg.values
    kind = v["domain.kind"].lower()
    if kind == "interval":
        return geo.Interval(float(v.get("domain.lo", 0.0)), float(v.get("domain.hi", "inf")))
    if kind == "half_line":
        return geo.half_line(float(v.get("domain.lo", 0.0)))
    if kind == "polygon":
        if "domain.vertices" not in v:
            raise ValueError("polygon needs domain.vertices")
        return geo.ConvexPolygon(parse_points(v["domain.vertices"]))
    if kind == "rectangle":
        if "domain.bounds" not in v:
            raise ValueError("rectangle needs domain.bounds = x0 x1 y0 y1")
        b = parse_floats(v["domain.bounds"])
        if len(b) != 4:
            raise ValueError("domain.bounds needs four numbers")
        return geo.rectangle(*b)
    if kind == "triangle":
        return geo.default_triangle()
    if kind == "disc":
        c = parse_points(v.get("domain.center", "(0, 0)"))[0]
        return geo.Disc(c, float(v.get("domain.radius", 1.0)))
    if kind == "lip":
        return geo.default_lip_domain()
    raise ValueError(f"unknown domain kind {kind!r}")


def build_field(cfg: ExperimentConfig, dim: int | None = None) -> fl.FieldSpec:
    kind = cfg.values["field.kind"].lower()
    if dim is None:
        dim = build_domain(cfg).dim
    if kind == "identity":
        return fl.identity(dim)
    if kind == "rotation":
        if dim != 2:
            raise ValueError("rotation needs a planar domain")
        return fl.rotation()
    raise ValueError(f"unknown field kind {kind!r}")


_F_MIN = re.compile(r"min\(\s*x(\d+)\s*,\s*([-+0-9.eE]+)\s*\)")
_F_COORD = re.compile(r"x(\d+)")
_F_CONST = re.compile(r"const\(\s*([-+0-9.eE]+)\s*\)")


def parse_function(text: str):
    """Scalar test functions: ``xK``, ``min(xK, c)``, ``norm`` or ``const(c)``."""
    s = text.strip().lower()
    if m := _F_MIN.fullmatch(s):
        i, c = int(m.group(1)) - 1, float(m.group(2))
        return lambda z: min(float(z[i]), c)
    if m := _F_COORD.fullmatch(s):
        i = int(m.group(1)) - 1
        return lambda z: float(z[i])
    if m := _F_CONST.fullmatch(s):
        c = float(m.group(1))
        return lambda z: c
    if s == "norm":
        return lambda z: float(math.sqrt(float(np.dot(z, z))))
    raise ValueError(f"unknown function {text!r}")
