"""Flat ``key = value`` scenario files.

One entry per line; ``#`` starts a comment.  Every problem in a file is
collected before a ConfigError is raised, so a single run reports them all.
Keys not present take the defaults below; ``render`` writes a complete
config back out, which is what the run manifest contains.
"""

from __future__ import annotations

import importlib
import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError, InputDomainError
from .transition import ContactRate, GreenhalghParams

MODELS = ("greenhalgh", "custom")
LAMBDA_FAMILIES = ("constant", "affine", "saturating")
FP_SOLVERS = ("diffusion", "master")
COMPARE_TARGETS = ("y", "jump")


@dataclass(frozen=True)
class ScenarioConfig:
    # model
    model: str = "greenhalgh"
    mu: float = 0.01
    gamma: float = 0.05
    lambda_family: str = "constant"
    lambda0: float = 0.2
    lambda1: float = 0.0
    lambda_c: float = 1.0
    drift: str = ""
    alpha: str = ""
    beta: str = ""
    scale: str = "sisde.models:one"
    declared_M: float = math.nan
    declared_H: float = math.nan
    declared_L: float = math.nan
    # simulation
    T: float = 1.0
    level: int = 8
    levels: tuple = (6, 7, 8, 9, 10)
    paths: int = 100
    seed: int = 0
    rho: float = 0.0
    absorb: bool = True
    x0: float = 30.0
    y0: float = 100.0
    dt: float = 1e-3
    record_every: int = 1
    validate_samples: int = 20000
    fp_solver: str = "diffusion"
    fp_max: int = 0
    compare_target: str = "y"
    compare_threshold: float = 0.05
    # output
    out: str = "out"

    def greenhalgh(self) -> GreenhalghParams:
        rate = ContactRate(self.lambda_family, self.lambda0, self.lambda1, self.lambda_c)
        return GreenhalghParams(self.mu, self.gamma, rate)

    def declared(self, name: str):
        v = getattr(self, f"declared_{name}")
        return None if math.isnan(v) else v


def _int(s):
    return int(s, 10)


def _bool(s):
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    return tuple(int(p, 10) for p in s.split(",") if p.strip())


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s

    return parse


def _ref(s):
    if s.count(":") != 1 or not all(s.split(":")):
        raise ValueError(f"expected module:attr, got {s!r}")
    return s


_PARSERS = {
    "model": _choice(MODELS),
    "lambda_family": _choice(LAMBDA_FAMILIES),
    "drift": _ref,
    "alpha": _ref,
    "beta": _ref,
    "scale": _ref,
    "levels": _ints,
    "absorb": _bool,
    "fp_solver": _choice(FP_SOLVERS),
    "compare_target": _choice(COMPARE_TARGETS),
    "out": str,
}
for _f in fields(ScenarioConfig):
    if _f.name not in _PARSERS:
        _PARSERS[_f.name] = _int if _f.type == "int" else float

_RANGES = {
    "mu": (lambda v: v > 0, "must be > 0"),
    "gamma": (lambda v: v >= 0, "must be >= 0"),
    "lambda0": (lambda v: v >= 0, "must be >= 0"),
    "lambda1": (lambda v: v >= 0, "must be >= 0"),
    "lambda_c": (lambda v: v > 0, "must be > 0"),
    "declared_M": (lambda v: math.isnan(v) or v > 0, "must be > 0"),
    "declared_H": (lambda v: math.isnan(v) or v > 0, "must be > 0"),
    "declared_L": (lambda v: math.isnan(v) or v > 0, "must be > 0"),
    "T": (lambda v: 0 < v < math.inf, "must be > 0 and finite"),
    "level": (lambda v: 0 <= v <= 24, "must lie in [0, 24]"),
    "levels": (lambda v: len(v) >= 2 and len(set(v)) == len(v) and all(0 <= k <= 24 for k in v),
               "must list at least two distinct levels in [0, 24]"),
    "paths": (lambda v: v >= 1, "must be >= 1"),
    "seed": (lambda v: 0 <= v < 2**64, "must lie in [0, 2^64)"),
    "rho": (lambda v: -1 <= v <= 1, "must lie in [-1, 1]"),
    "x0": (math.isfinite, "must be finite"),
    "y0": (lambda v: 0 <= v < math.inf, "must be >= 0 and finite"),
    "dt": (lambda v: 0 < v < math.inf, "must be > 0"),
    "record_every": (lambda v: v >= 1, "must be >= 1"),
    "validate_samples": (lambda v: v >= 2, "must be >= 2"),
    "fp_max": (lambda v: v >= 0, "must be >= 0"),
    "compare_threshold": (lambda v: v >= 0, "must be >= 0"),
}


def parse_config(text: str) -> ScenarioConfig:
    problems = []
    seen = {}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _PARSERS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            problems.append(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = lineno
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            problems.append(f"line {lineno}: {key}: {exc}")
            continue
        check = _RANGES.get(key)
        if check and not check[0](values[key]):
            problems.append(f"line {lineno}: {key} = {val} {check[1]}")

    cfg = replace(ScenarioConfig(), **values)
    if cfg.model == "custom":
        for key in ("drift", "alpha", "beta"):
            if not getattr(cfg, key):
                problems.append(f"model = custom requires {key!r}")
    elif not problems:
        try:
            cfg.greenhalgh()
        except InputDomainError as exc:
            problems.append(f"contact rate: {exc}")
        if not 0 <= cfg.x0 <= cfg.y0:
            problems.append("greenhalgh needs 0 <= x0 <= y0")
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(k) for k in v)
    return str(v)


def render(cfg: ScenarioConfig) -> str:
    """Complete config text; parsing it gives back ``cfg``."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, float) and math.isnan(v):
            continue
        if f.name in ("drift", "alpha", "beta") and not v:
            continue
        lines.append(f"{f.name} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def resolve(ref: str):
    """Import ``module:attr``."""
    mod, attr = ref.split(":")
    try:
        return getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot resolve {ref!r}: {exc}") from exc
