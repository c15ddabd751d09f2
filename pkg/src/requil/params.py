"""Symbolic gate parameters.

Gate parameters are affine expressions ``c0 + sum(ci * vi)`` over declared
run-time REAL variables.  Anything non-affine (products of variables, symbolic
denominators, transcendental functions of a variable) is rejected when the
expression is built.  Matrix entries in gate definitions need more than affine
arithmetic, so those are kept as small expression trees (:class:`EntryExpr`)
and only evaluated once every parameter is concrete.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

EQ_TOL = 1e-12


class ParamError(ValueError):
    """Raised for ill-formed or non-affine parameter arithmetic."""


@dataclass(eq=False)
class ParamExpr:
    """Affine expression: ``constant + sum(coefficient * variable)``.

    Kept in canonical form: zero-coefficient terms dropped, variables sorted.
    """

    constant: float = 0.0
    terms: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.terms = {v: float(c) for v, c in sorted(self.terms.items()) if abs(c) > EQ_TOL}
        self.constant = float(self.constant)

    @property
    def is_concrete(self) -> bool:
        return not self.terms

    @property
    def value(self) -> float:
        if self.terms:
            raise ParamError(f"symbolic parameter {self} has no concrete value")
        return self.constant

    def variables(self) -> set[str]:
        return set(self.terms)

    def __add__(self, other: ParamExpr | float) -> ParamExpr:
        other = _as_expr(other)
        terms = dict(self.terms)
        for v, c in other.terms.items():
            terms[v] = terms.get(v, 0.0) + c
        return ParamExpr(self.constant + other.constant, terms)

    def __sub__(self, other: ParamExpr | float) -> ParamExpr:
        return self + (-_as_expr(other))

    def __neg__(self) -> ParamExpr:
        return self.scale(-1.0)

    def scale(self, k: float) -> ParamExpr:
        return ParamExpr(self.constant * k, {v: c * k for v, c in self.terms.items()})

    def __mul__(self, other: ParamExpr | float) -> ParamExpr:
        other = _as_expr(other)
        if other.is_concrete:
            return self.scale(other.constant)
        if self.is_concrete:
            return other.scale(self.constant)
        raise ParamError("product of two symbolic parameters is not affine")

    def __truediv__(self, other: ParamExpr | float) -> ParamExpr:
        other = _as_expr(other)
        if not other.is_concrete:
            raise ParamError("division by a symbolic parameter is not affine")
        if other.constant == 0.0:
            raise ParamError("division by zero in parameter expression")
        return self.scale(1.0 / other.constant)

    def substitute(self, env: dict[str, float]) -> ParamExpr:
        """Replace variables present in ``env`` with concrete values."""
        constant = self.constant
        terms: dict[str, float] = {}
        for v, c in self.terms.items():
            if v in env:
                constant += c * env[v]
            else:
                terms[v] = c
        return ParamExpr(constant, terms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamExpr):
            return NotImplemented
        if abs(self.constant - other.constant) > EQ_TOL:
            return False
        names = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(v, 0.0) - other.terms.get(v, 0.0)) <= EQ_TOL for v in names)

    def __repr__(self) -> str:
        return f"ParamExpr({format_param(self)!r})"


def _as_expr(x: ParamExpr | float | int) -> ParamExpr:
    if isinstance(x, ParamExpr):
        return x
    return ParamExpr(float(x))


def simplify_param(e: ParamExpr) -> ParamExpr:
    """Return the canonical form of ``e`` (idempotent; constructor enforces it)."""
    return ParamExpr(e.constant, dict(e.terms))


# ---------------------------------------------------------------------------
# Formatting.  Angles that are small rational multiples of pi print in terms
# of `pi`; unit-fraction coefficients print as `v/6`; everything else uses the
# shortest round-trip decimal.

_PI_DENOMS = (1, 2, 3, 4, 6, 8, 12, 16)


def _pi_fraction(x: float) -> tuple[int, int] | None:
    for d in _PI_DENOMS:
        k = x * d / math.pi
        r = round(k)
        if r != 0 and abs(k - r) < 1e-11 and abs(r) <= 16 * d:
            g = math.gcd(abs(r), d)
            return r // g, d // g
    return None


def _format_constant(x: float) -> str:
    if x == 0.0:
        return "0"
    frac = _pi_fraction(x)
    if frac is not None:
        n, d = frac
        num = "pi" if abs(n) == 1 else f"{abs(n)}*pi"
        s = num if d == 1 else f"{num}/{d}"
        return f"-{s}" if n < 0 else s
    if x == int(x) and abs(x) < 1e15:
        return repr(int(x))
    return repr(x)


def _format_term(coef: float, var: str) -> str:
    if abs(coef - 1.0) <= EQ_TOL:
        return var
    if abs(coef + 1.0) <= EQ_TOL:
        return f"-{var}"
    inv = 1.0 / coef
    r = round(inv)
    if r != 0 and abs(inv - r) < 1e-11 and abs(r) <= 64:
        return f"{var}/{r}" if r > 0 else f"-{var}/{-r}"
    if coef == int(coef):
        return f"{int(coef)}*{var}"
    return f"{repr(coef)}*{var}"


def format_param(e: ParamExpr) -> str:
    if e.is_concrete:
        return _format_constant(e.constant)
    parts: list[str] = []
    if abs(e.constant) > EQ_TOL:
        parts.append(_format_constant(e.constant))
    for v, c in e.terms.items():
        t = _format_term(c, v)
        if not parts:
            parts.append(t)
        elif t.startswith("-"):
            parts.append(f"- {t[1:]}")
        else:
            parts.append(f"+ {t}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Expression trees for DEFGATE matrix entries.  These admit products,
# quotients, and cis/cos/sin/exp/sqrt, but can only be evaluated once all
# referenced parameters are bound.

_FUNCTIONS = {
    "cis": lambda z: cmath.exp(1j * z),
    "sin": cmath.sin,
    "cos": cmath.cos,
    "exp": cmath.exp,
    "sqrt": cmath.sqrt,
}


@dataclass(frozen=True)
class EntryExpr:
    """Node of a DEFGATE entry expression: op in {num, var, +, -, *, /, neg, call}."""

    op: str
    args: tuple = ()

    def evaluate(self, env: dict[str, complex]) -> complex:
        if self.op == "num":
            return complex(self.args[0])
        if self.op == "var":
            name = self.args[0]
            if name not in env:
                raise ParamError(f"unbound parameter %{name} in gate definition")
            return complex(env[name])
        if self.op == "neg":
            return -self.args[0].evaluate(env)
        if self.op == "call":
            return _FUNCTIONS[self.args[0]](self.args[1].evaluate(env))
        a = self.args[0].evaluate(env)
        b = self.args[1].evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        raise ParamError(f"unknown entry operation {self.op!r}")

    def variables(self) -> set[str]:
        if self.op == "var":
            return {self.args[0]}
        if self.op == "num":
            return set()
        out: set[str] = set()
        for a in self.args:
            if isinstance(a, EntryExpr):
                out |= a.variables()
        return out
