"""Problem instances: coefficient expansions, initial data, grids and the eps list.

A scenario file is a flat TOML document, for example::

    a0 = "1"
    b0 = "1"
    c0 = "1 + 0.1*sin(0.2*x)"
    u0_init = "0"
    phi0 = 0.0
    dphi0 = 2.0
    T = 1.0
    eps = [0.1, 0.05, 0.025, 0.0125]
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import tomli

from . import exprdsl
from .errors import ConfigError, EvalDomainError

log = logging.getLogger(__name__)

EXPR_KEYS = ("a0", "a1", "b0", "b1", "c0", "c1", "u0_init", "u1_init")
REQUIRED = ("a0", "b0", "c0", "u0_init", "phi0", "dphi0")
_HIGHER = re.compile(r"^[abc]([2-9]|[1-9]\d+)$")
FORMS = ("theorem1", "theorem2", "auto")

DEFAULTS = {
    "a1": "0",
    "b1": "0",
    "c1": "0",
    "u1_init": "0",
    "C0": 0.0,
    "C3": 0.0,
    "C4": 0.0,
    "T": 1.0,
    "x_min": -10.0,
    "x_max": 10.0,
    "n_x": 201,
    "n_t": 33,
    "tau_max": None,
    "eps": [0.1, 0.05, 0.025, 0.0125],
    "form": "auto",
    "n": 2,
}
NUMERIC_KEYS = ("phi0", "dphi0", "C0", "C3", "C4", "T", "x_min", "x_max", "tau_max")
INT_KEYS = ("n_x", "n_t", "n")
KNOWN = set(EXPR_KEYS) | set(NUMERIC_KEYS) | set(INT_KEYS) | {"eps", "form"}


@dataclass(frozen=True)
class CoefficientModel:
    """Order-0 and order-1 terms of a(x,t,eps), b(x,t,eps), c(x,t,eps)."""

    a0: exprdsl.Node
    a1: exprdsl.Node
    b0: exprdsl.Node
    b1: exprdsl.Node
    c0: exprdsl.Node
    c1: exprdsl.Node
    n: int = 2
    higher: tuple = ()

    def full(self, name, x, t, eps):
        """Value of the truncated expansion ``name0 + eps * name1``."""
        return (exprdsl.evaluate(getattr(self, name + "0"), x, t)
                + eps * exprdsl.evaluate(getattr(self, name + "1"), x, t))

    def table(self) -> "CoefficientTable":
        return CoefficientTable(self)


class CoefficientTable:
    """Coefficient trees and their first partials, differentiated once.

    ``tab("c0x", x, t)`` evaluates dc0/dx; suffixes ``x``, ``t`` are allowed
    on every coefficient name.
    """

    def __init__(self, model: CoefficientModel):
        self.trees = {}
        for base in ("a0", "a1", "b0", "b1", "c0", "c1"):
            tree = getattr(model, base)
            self.trees[base] = tree
            self.trees[base + "x"] = exprdsl.diff(tree, "x")
            self.trees[base + "t"] = exprdsl.diff(tree, "t")
            self.trees[base + "xx"] = exprdsl.diff(self.trees[base + "x"], "x")

    def __call__(self, name, x, t):
        return exprdsl.evaluate(self.trees[name], x, t)

    def many(self, names, x, t):
        return {n: self(n, x, t) for n in names}


@dataclass(frozen=True)
class Grid:
    x: np.ndarray
    t: np.ndarray

    @property
    def shape(self):
        return (self.t.size, self.x.size)


@dataclass(frozen=True)
class Scenario:
    coefficients: CoefficientModel
    u0_init: exprdsl.Node
    u1_init: exprdsl.Node
    phi0: float
    dphi0: float
    C0: float = 0.0
    C3: float = 0.0
    C4: float = 0.0
    T: float = 1.0
    x_min: float = -10.0
    x_max: float = 10.0
    n_x: int = 201
    n_t: int = 33
    tau_max: Optional[float] = None
    eps: tuple = (0.1, 0.05, 0.025, 0.0125)
    form: str = "auto"
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n(self):
        return self.coefficients.n

    def grid(self, n_x=None, n_t=None) -> Grid:
        return Grid(np.linspace(self.x_min, self.x_max, n_x or self.n_x),
                    np.linspace(0.0, self.T, n_t or self.n_t))

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, **changes)


def _parse_expr_value(key, value):
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected an expression string, got a boolean")
    if isinstance(value, (int, float)):
        value = repr(float(value))
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected an expression string, got {type(value).__name__}")
    return exprdsl.parse_expr(value)


def _number(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def scenario_from_mapping(doc: dict) -> Scenario:
    """Build a scenario from an already-decoded key/value mapping."""
    unknown = [k for k in doc if k not in KNOWN and not _HIGHER.match(k)]
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    for key in REQUIRED:
        if key not in doc:
            raise ConfigError(key)
    merged = dict(DEFAULTS)
    merged.update(doc)

    n = merged["n"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise ConfigError("n must be an integer")
    if n != 2:
        raise ConfigError("n must equal 2")

    exprs = {k: _parse_expr_value(k, merged[k]) for k in EXPR_KEYS}
    higher = tuple(sorted((k, exprdsl.to_text(_parse_expr_value(k, doc[k])))
                          for k in doc if _HIGHER.match(k)))
    if higher:
        log.warning("coefficient orders above 1 are ignored: %s", ", ".join(k for k, _ in higher))

    nums = {}
    for key in NUMERIC_KEYS:
        if merged[key] is None:
            nums[key] = None
        else:
            nums[key] = _number(key, merged[key])
    ints = {}
    for key in ("n_x", "n_t"):
        v = merged[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        ints[key] = v

    eps = merged["eps"]
    if not isinstance(eps, (list, tuple)) or not eps:
        raise ConfigError("eps: expected a non-empty array of numbers")
    eps = tuple(_number("eps", e) for e in eps)
    form = merged["form"]
    if form not in FORMS:
        raise ConfigError(f"form: expected one of {FORMS}, got {form!r}")

    if nums["T"] <= 0:
        raise ConfigError("T must be positive")
    if nums["x_max"] <= nums["x_min"]:
        raise ConfigError("x_max must exceed x_min")
    if ints["n_x"] < 16 or ints["n_t"] < 16:
        raise ConfigError("n_x and n_t must be at least 16")
    if nums["tau_max"] is not None and nums["tau_max"] < 20:
        raise ConfigError("tau_max must be at least 20")
    if any(not 0.0 < e < 1.0 for e in eps):
        raise ConfigError("eps values must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps values must be strictly decreasing")

    coeffs = CoefficientModel(a0=exprs["a0"], a1=exprs["a1"], b0=exprs["b0"], b1=exprs["b1"],
                              c0=exprs["c0"], c1=exprs["c1"], n=n, higher=higher)
    return Scenario(coefficients=coeffs, u0_init=exprs["u0_init"], u1_init=exprs["u1_init"],
                    eps=eps, form=form, source=dict(doc), **nums, **ints)


def load_scenario(src: str) -> Scenario:
    """Parse a scenario document (TOML text)."""
    try:
        doc = tomli.loads(src)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"not a valid key/value document: {exc}") from exc
    nested = [k for k, v in doc.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"tables are not allowed: {', '.join(nested)}")
    return scenario_from_mapping(doc)


def load_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    predicate: str
    message: str
    point: tuple


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(v.message for v in self.violations)


def _first_zero(values, x, t, expr, refine=4):
    """Locate the first zero or sign change of ``values`` (shape (nt, nx)).

    Sign changes are confirmed and located on a ``refine``-times finer
    sampling of the bracketing cell.
    """
    zero = values == 0.0
    if np.any(zero):
        k, i = np.argwhere(zero)[0]
        return float(x[i]), float(t[k])
    s = np.sign(values)
    flips = s[:, 1:] != s[:, :-1]
    if np.any(flips):
        k, i = np.argwhere(flips)[0]
        xs = np.linspace(x[i], x[i + 1], refine + 1)
        vs = exprdsl.evaluate(expr, xs, t[k])
        j = int(np.argmax(np.sign(vs) != np.sign(vs[0])))
        x0 = xs[j - 1] - vs[j - 1] * (xs[j] - xs[j - 1]) / (vs[j] - vs[j - 1])
        return float(x0), float(t[k])
    flips = s[1:, :] != s[:-1, :]
    if np.any(flips):
        k, i = np.argwhere(flips)[0]
        ts = np.linspace(t[k], t[k + 1], refine + 1)
        vs = exprdsl.evaluate(expr, x[i], ts)
        j = int(np.argmax(np.sign(vs) != np.sign(vs[0])))
        t0 = ts[j - 1] - vs[j - 1] * (ts[j] - ts[j - 1]) / (vs[j] - vs[j - 1])
        return float(x[i]), float(t0)
    return None


def validate(s: Scenario, grid: Optional[Grid] = None) -> ValidationReport:
    """Check the standing hypotheses on ``grid`` (default: the scenario grid).

    Reports every failed predicate with its first offending sample; never raises.
    """
    grid = grid or s.grid()
    X, Tm = np.meshgrid(grid.x, grid.t)
    out = []
    cm = s.coefficients
    named = [(k, getattr(cm, k)) for k in ("a0", "a1", "b0", "b1", "c0", "c1")]
    named += [("u0_init", s.u0_init), ("u1_init", s.u1_init)]
    values = {}
    for key, expr in named:
        xs, ts = (grid.x, 0.0) if key.endswith("_init") else (X, Tm)
        try:
            values[key] = exprdsl.evaluate(expr, xs, ts)
        except EvalDomainError as exc:
            out.append(Violation("domain", f"{key} cannot be evaluated at {exc.point}", exc.point))
    for key in ("a0", "b0", "c0"):
        if key not in values:
            continue
        where = _first_zero(np.broadcast_to(values[key], X.shape), grid.x, grid.t, getattr(cm, key))
        if where is not None:
            out.append(Violation("nonvanishing", f"{key} vanishes at ({where[0]:g}, {where[1]:g})", where))
    return ValidationReport(tuple(out))
