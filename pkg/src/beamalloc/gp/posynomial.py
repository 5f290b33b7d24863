"""Monomials, posynomials and geometric programs over named positive variables.

A term may carry factors ``(1 - x_v)**(-e)`` with ``e >= 0`` for variables
bounded above by 1. In log coordinates ``-log(1 - exp(y))`` is convex, so such
terms keep the log-sum-exp constraints convex; they represent
``1/(1 - beta)`` exactly where a truncated geometric series would otherwise
be needed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping


def _clean(d: Mapping[str, float]) -> dict[str, float]:
    return {k: float(v) for k, v in sorted(d.items()) if v != 0}


@dataclass(frozen=True)
class Monomial:
    coefficient: float
    exponents: Mapping[str, float] = field(default_factory=dict)
    one_minus: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
            raise ValueError(f"monomial coefficient must be positive, got {self.coefficient}")
        object.__setattr__(self, "exponents", _clean(self.exponents))
        om = _clean(self.one_minus)
        if any(e < 0 for e in om.values()):
            raise ValueError("(1 - x) factors must have nonnegative order")
        object.__setattr__(self, "one_minus", om)

    def variables(self) -> set[str]:
        return set(self.exponents) | set(self.one_minus)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Monomial(self.coefficient * other, self.exponents, self.one_minus)
        if isinstance(other, Posynomial):
            return other * self
        ex = dict(self.exponents)
        for k, v in other.exponents.items():
            ex[k] = ex.get(k, 0.0) + v
        om = dict(self.one_minus)
        for k, v in other.one_minus.items():
            om[k] = om.get(k, 0.0) + v
        return Monomial(self.coefficient * other.coefficient, ex, om)

    __rmul__ = __mul__

    def __pow__(self, p: float):
        if self.one_minus and p < 0:
            raise ValueError("cannot invert a term with (1 - x) factors")
        return Monomial(
            self.coefficient**p,
            {k: v * p for k, v in self.exponents.items()},
            {k: v * p for k, v in self.one_minus.items()},
        )

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        return self * other**-1

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def evaluate(self, x: Mapping[str, float]) -> float:
        v = self.coefficient
        for k, e in self.exponents.items():
            v *= x[k] ** e
        for k, e in self.one_minus.items():
            v *= (1.0 - x[k]) ** (-e)
        return v

    def __str__(self):
        parts = [repr(self.coefficient)]
        parts += [f"{k}^{e!r}" for k, e in self.exponents.items()]
        parts += [f"(1-{k})^{-e!r}" for k, e in self.one_minus.items()]
        return "*".join(parts)


class Posynomial:
    """Sum of monomials; terms with coefficient 0 must simply be omitted."""

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Monomial]):
        self.terms = tuple(terms)
        if not self.terms:
            raise ValueError("posynomial needs at least one term")

    def __add__(self, other):
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        if isinstance(other, (int, float)):
            return Posynomial(self.terms + (Monomial(float(other)),)) if other else self
        return Posynomial(self.terms + other.terms)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Posynomial(t * other for t in self.terms)
        if isinstance(other, Monomial):
            return Posynomial(t * other for t in self.terms)
        return Posynomial(a * b for a in self.terms for b in other.terms)

    __rmul__ = __mul__

    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.terms:
            out |= t.variables()
        return out

    def evaluate(self, x: Mapping[str, float]) -> float:
        return math.fsum(t.evaluate(x) for t in self.terms)

    def __len__(self):
        return len(self.terms)

    def __str__(self):
        return " + ".join(str(t) for t in self.terms)


def var(name: str) -> Monomial:
    return Monomial(1.0, {name: 1.0})


def one_minus_inv(name: str, order: float = 1.0) -> Monomial:
    """The factor ``(1 - x)**(-order)`` as a monomial-like term."""
    return Monomial(1.0, {}, {name: order})


def as_posynomial(p) -> Posynomial:
    return p if isinstance(p, Posynomial) else Posynomial([p])


@dataclass
class GpProblem:
    """``minimize objective s.t. every constraint posynomial <= 1``.

    ``bounds`` maps each variable to an open interval ``(lo, hi)`` in the
    original (positive) coordinates; ``start`` optionally gives a strictly
    feasible point. ``meta`` carries builder information used during
    extraction.
    """

    objective: Posynomial
    constraints: list[tuple[str, Posynomial]]
    bounds: dict[str, tuple[float, float]]
    start: dict[str, float] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objective = as_posynomial(self.objective)
        self.constraints = [(lbl, as_posynomial(p)) for lbl, p in self.constraints]
        used = self.objective.variables()
        for _, p in self.constraints:
            used |= p.variables()
        missing = used - set(self.bounds)
        if missing:
            raise ValueError(f"variables without bounds: {sorted(missing)}")
        for name, (lo, hi) in self.bounds.items():
            if not (0 <= lo < hi):
                raise ValueError(f"bad bounds for {name}: {(lo, hi)}")
        for _, p in self.constraints:
            for t in p.terms:
                for v in t.one_minus:
                    if self.bounds[v][1] > 1:
                        raise ValueError(f"(1 - {v}) factor needs {v} bounded by 1")

    @property
    def variables(self) -> list[str]:
        return list(self.bounds)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def constraint_values(self, x: Mapping[str, float]) -> dict[str, float]:
        return {lbl: p.evaluate(x) for lbl, p in self.constraints}

    def max_violation(self, x: Mapping[str, float]) -> float:
        """Largest ``posynomial - 1`` over all constraints (<= 0 when feasible)."""
        return max(v - 1.0 for v in self.constraint_values(x).values())


# ---------------------------------------------------------------------------
# text dump for cross-solver debugging
# ---------------------------------------------------------------------------


def dump_problem(problem: GpProblem) -> str:
    """One line per item: variables with bounds, objective, constraints."""
    lines = ["# geometric program: minimize objective s.t. constraint <= 1"]
    for name, (lo, hi) in problem.bounds.items():
        lines.append(f"var {name} {lo!r} {hi!r}")
    lines.append(f"objective {problem.objective}")
    for lbl, p in problem.constraints:
        lines.append(f"constraint {lbl} : {p}")
    return "\n".join(lines) + "\n"


_FACTOR = re.compile(r"^\(1-(?P<om>[^)]+)\)\^(?P<ome>\S+)$|^(?P<v>[^^]+)\^(?P<e>\S+)$")


def _parse_term(text: str) -> Monomial:
    head, *factors = text.strip().split("*")
    ex, om = {}, {}
    for f in factors:
        m = _FACTOR.match(f)
        if m is None:
            raise ValueError(f"cannot parse factor {f!r}")
        if m.group("om"):
            om[m.group("om")] = -float(m.group("ome"))
        else:
            ex[m.group("v")] = float(m.group("e"))
    return Monomial(float(head), ex, om)


def _parse_posy(text: str) -> Posynomial:
    return Posynomial(_parse_term(t) for t in text.split(" + "))


def load_problem(text: str) -> GpProblem:
    """Inverse of :func:`dump_problem` (meta and start are not preserved)."""
    bounds, cons, obj = {}, [], None
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        kind, rest = line.split(" ", 1)
        if kind == "var":
            name, lo, hi = rest.split()
            bounds[name] = (float(lo), float(hi))
        elif kind == "objective":
            obj = _parse_posy(rest)
        elif kind == "constraint":
            lbl, body = rest.split(" : ", 1)
            cons.append((lbl, _parse_posy(body)))
        else:
            raise ValueError(f"unknown line kind {kind!r}")
    if obj is None:
        raise ValueError("no objective line")
    return GpProblem(obj, cons, bounds)
