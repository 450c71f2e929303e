"""Run configuration: a small line-oriented format and its renderer.

    # comment
    [model]
    d1    = affine(1.0, 0.5)
    birth = pwlinear(0:0, 0.5:1, 1:1)
    alpha = 1.0
    [grid]
    nx = 16
    na = 32
    scheme = implicit_euler
    [solver]
    eta_scan = 0.5, 1.1, 2

Function values are ``family(p1, p2[, p3])``; age profiles are
``pwlinear(a1:v1, a2:v2, ...)``; lists are comma separated numbers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

from .evolve import StepScheme
from .model import _ARITY, AgeProfile, CoefficientFn, Family, ModelSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        where = f" at line {line}" + (f", column {col}" if col else "") if line else ""
        super().__init__(message + where)
        self.line = line
        self.col = col


class ConstraintError(ValueError):
    """Syntactically valid input that violates a model constraint."""


FUNCTION_KEYS = ("d1", "d2", "d3", "d4", "mu1", "mu2")
PROFILE_KEYS = ("omega", "birth")
MODEL_REALS = ("alpha", "beta", "a_max", "length")


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    nx: int
    na: int
    scheme: StepScheme = StepScheme.IMPLICIT_EULER
    tol: float = 1e-10
    reduced_tol: float = 1e-10
    max_iter: int = 20
    eta: float = 2.0
    eps0: float = 0.01
    ds: float | None = None
    n_steps: int = 8
    xi_scan: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
    eta_scan: tuple[float, ...] = (0.5, 0.9, 1.0, 1.1, 1.5, 2.0, 3.0, 5.0)
    z_max: float = 10.0
    rho: float | None = None


_SOLVER_TYPES = {
    "tol": float, "reduced_tol": float, "max_iter": int, "eta": float, "eps0": float,
    "ds": float, "n_steps": int, "xi_scan": tuple, "eta_scan": tuple, "z_max": float, "rho": float,
}
_GRID_TYPES = {"nx": int, "na": int, "scheme": StepScheme}
_SECTIONS = {
    "model": set(FUNCTION_KEYS) | set(PROFILE_KEYS) | set(MODEL_REALS),
    "grid": set(_GRID_TYPES),
    "solver": set(_SOLVER_TYPES),
}

_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class _Cursor:
    """Recursive-descent reader over one value string."""

    def __init__(self, text: str, line: int, col0: int):
        self.text, self.pos, self.line, self.col0 = text, 0, line, col0

    def error(self, msg):
        return ConfigError(msg, self.line, self.col0 + self.pos + 1)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            raise self.error(f"expected '{ch}'")
        self.pos += 1

    def at_end(self):
        return self.peek() == ""

    def number(self) -> float:
        self.skip()
        m = _NUMBER.match(self.text, self.pos)
        if not m:
            raise self.error("expected a number")
        self.pos = m.end()
        val = float(m.group())
        if not math.isfinite(val):
            raise self.error("number is not finite")
        return val

    def ident(self) -> str | None:
        self.skip()
        m = _IDENT.match(self.text, self.pos)
        if not m:
            return None
        self.pos = m.end()
        return m.group()


def _parse_value(text: str, line: int, col0: int):
    cur = _Cursor(text, line, col0)
    cur.skip()
    start = cur.pos
    name = cur.ident()
    if name is not None:
        if cur.peek() != "(":
            if not cur.at_end():
                raise cur.error("unexpected text after identifier")
            return ("ident", name)
        cur.expect("(")
        if name == "pwlinear":
            pts = []
            while True:
                a = cur.number()
                cur.expect(":")
                pts.append((a, cur.number()))
                if cur.peek() == ",":
                    cur.pos += 1
                    continue
                break
            cur.expect(")")
            if not cur.at_end():
                raise cur.error("unexpected text after ')'")
            return ("profile", pts)
        if name not in {f.value for f in Family}:
            cur.pos = start
            raise cur.error(f"unknown family '{name}'")
        args = [cur.number()]
        while cur.peek() == ",":
            cur.pos += 1
            args.append(cur.number())
        cur.expect(")")
        if not cur.at_end():
            raise cur.error("unexpected text after ')'")
        arity = _ARITY[Family(name)]
        if len(args) != arity:
            cur.pos = start
            raise cur.error(f"{name} expects {arity} parameters, got {len(args)}")
        return ("function", (name, tuple(args)))

    nums = [cur.number()]
    while cur.peek() == ",":
        cur.pos += 1
        nums.append(cur.number())
    if not cur.at_end():
        raise cur.error("unexpected text after number")
    return ("numbers", nums)


def _coerce(kind, value, want, key, line):
    if want in ("function", "profile"):
        if kind != want:
            raise ConfigError(f"'{key}' expects a {'pwlinear profile' if want == 'profile' else 'function'}", line)
        return value
    if want is StepScheme:
        if kind != "ident":
            raise ConfigError(f"'{key}' expects a scheme name", line)
        try:
            return StepScheme(value)
        except ValueError:
            raise ConfigError(f"unknown scheme '{value}'", line) from None
    if kind != "numbers":
        raise ConfigError(f"'{key}' expects a number", line)
    if want is tuple:
        return tuple(value)
    if len(value) != 1:
        raise ConfigError(f"'{key}' expects a single number", line)
    x = value[0]
    if want is int:
        if x != int(x):
            raise ConfigError(f"'{key}' expects an integer", line)
        return int(x)
    return float(x)


def parse_config(text: str) -> RunConfig:
    entries: dict[str, dict] = {s: {} for s in _SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            m = re.fullmatch(r"\[\s*([A-Za-z_]+)\s*\]", stripped)
            if not m or m.group(1) not in _SECTIONS:
                raise ConfigError(f"unknown section header {stripped!r}", lineno)
            section = m.group(1)
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if section is None:
            raise ConfigError(f"entry '{key}' outside any section", lineno)
        if key not in _SECTIONS[section]:
            raise ConfigError(f"unknown key '{key}' in [{section}]", lineno)
        if key in entries[section]:
            raise ConfigError(f"duplicate key '{key}'", lineno)
        if not value_part.strip():
            raise ConfigError(f"missing value for '{key}'", lineno)
        col0 = len(key_part) + 1
        kind, value = _parse_value(value_part, lineno, col0)
        if section == "model":
            want = "function" if key in FUNCTION_KEYS else "profile" if key in PROFILE_KEYS else float
        elif section == "grid":
            want = _GRID_TYPES[key]
        else:
            want = _SOLVER_TYPES[key]
        entries[section][key] = _coerce(kind, value, want, key, lineno)

    for sec, required in (("model", _SECTIONS["model"]), ("grid", {"nx", "na"})):
        missing = sorted(required - set(entries[sec]))
        if missing:
            raise ConfigError(f"missing keys in [{sec}]: {', '.join(missing)}")

    m = entries["model"]
    try:
        spec = ModelSpec(
            **{k: CoefficientFn(Family(m[k][0]), m[k][1]) for k in FUNCTION_KEYS},
            **{k: AgeProfile(tuple(m[k])) for k in PROFILE_KEYS},
            **{k: m[k] for k in MODEL_REALS},
        )
    except ValueError as exc:
        raise ConstraintError(str(exc)) from exc
    return RunConfig(model=spec, **entries["grid"], **entries["solver"])


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def render_config(cfg: RunConfig) -> str:
    """Text that :func:`parse_config` maps back to ``cfg``."""
    m = cfg.model
    out = ["[model]"]
    out += [f"{k} = {getattr(m, k)}" for k in FUNCTION_KEYS]
    out += [f"{k} = {getattr(m, k)!r}" for k in MODEL_REALS]
    out += [f"{k} = {getattr(m, k)}" for k in PROFILE_KEYS]
    out += ["", "[grid]", f"nx = {cfg.nx}", f"na = {cfg.na}", f"scheme = {cfg.scheme.value}", "", "[solver]"]
    for f in fields(cfg):
        if f.name not in _SOLVER_TYPES:
            continue
        val = getattr(cfg, f.name)
        if val is None:
            continue
        if isinstance(val, tuple):
            out.append(f"{f.name} = {', '.join(repr(float(x)) for x in val)}")
        else:
            out.append(f"{f.name} = {val!r}")
    return "\n".join(out) + "\n"
