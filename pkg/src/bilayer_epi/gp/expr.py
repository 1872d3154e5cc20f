"""Monomials, posynomials and geometric programs over named positive variables."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from numbers import Real
from typing import Iterable, Mapping, Sequence, Union

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


class GPError(ValueError):
    pass


def _check_name(name: str) -> str:
    if not _NAME.match(name):
        raise GPError(f"invalid variable name {name!r}")
    return name


@dataclass(frozen=True, eq=False)
class Monomial:
    """``coefficient * prod_k x_k ** exponents[k]`` with a positive coefficient."""

    coefficient: float
    exponents: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        c = float(self.coefficient)
        if not (c > 0 and math.isfinite(c)):
            raise GPError(f"monomial coefficient must be positive and finite, got {c!r}")
        exps = {}
        for k, r in self.exponents.items():
            r = float(r)
            if r != 0.0:
                exps[_check_name(k)] = r
        object.__setattr__(self, "coefficient", c)
        object.__setattr__(self, "exponents", exps)

    @property
    def variables(self) -> set[str]:
        return set(self.exponents)

    def __mul__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coefficient * other, self.exponents)
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for k, r in other.exponents.items():
                exps[k] = exps.get(k, 0.0) + r
            return Monomial(self.coefficient * other.coefficient, exps)
        if isinstance(other, Posynomial):
            return other * self
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Real):
            return Monomial(self.coefficient / other, self.exponents)
        if isinstance(other, Monomial):
            return self * other ** -1
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, Real):
            return Monomial(other, {}) * self ** -1
        return NotImplemented

    def __pow__(self, r: float) -> "Monomial":
        return Monomial(self.coefficient ** r, {k: v * r for k, v in self.exponents.items()})

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def __eq__(self, other):
        if isinstance(other, Monomial):
            return self.coefficient == other.coefficient and self.exponents == other.exponents
        return NotImplemented

    def __repr__(self):
        return f"Monomial({format_monomial(self)})"


@dataclass(frozen=True, eq=False)
class Posynomial:
    """Nonempty sum of monomials."""

    terms: Sequence[Monomial]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise GPError("posynomial needs at least one term")
        for t in terms:
            if not isinstance(t, Monomial):
                raise GPError(f"posynomial term must be a Monomial, got {type(t).__name__}")
        object.__setattr__(self, "terms", terms)

    @property
    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.terms:
            out |= t.variables
        return out

    def __add__(self, other):
        if isinstance(other, Real):
            other = Monomial(other, {})
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        return NotImplemented

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (Real, Monomial)):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Real, Monomial)):
            return Posynomial([t / other for t in self.terms])
        return NotImplemented

    def __eq__(self, other):
        if isinstance(other, Posynomial):
            return self.terms == other.terms
        return NotImplemented

    def __repr__(self):
        return f"Posynomial({format_posynomial(self)})"


Expr = Union[Monomial, Posynomial]


def Variable(name: str) -> Monomial:
    return Monomial(1.0, {name: 1.0})


def as_posynomial(expr: Expr) -> Posynomial:
    return expr if isinstance(expr, Posynomial) else Posynomial([expr])


def evaluate(expr: Expr, point: Mapping[str, float]) -> float:
    """Exact sum-of-monomials value at a positive assignment."""
    total = 0.0
    for term in as_posynomial(expr).terms:
        v = term.coefficient
        for k, r in term.exponents.items():
            if k not in point:
                raise GPError(f"variable {k!r} is not assigned")
            x = point[k]
            if not x > 0:
                raise GPError(f"variable {k!r} must be positive, got {x!r}")
            v *= x ** r
        total += v
    return total


def posynomial_transform(terms: Iterable[tuple[float, float]], x_hat: float, var: str = "z") -> Posynomial:
    """``f(x) = sum_k c_k (x_hat - x)**p_k`` rewritten as a posynomial in ``z = x_hat - x``.

    The result is meaningful on ``0 < z < x_hat``; evaluating it at
    ``x_hat - x`` reproduces ``f(x)``.
    """
    if not x_hat > 0:
        raise GPError(f"x_hat must be positive, got {x_hat!r}")
    out = []
    for c, p in terms:
        if not c > 0:
            raise GPError(f"coefficient must be positive, got {c!r}")
        out.append(Monomial(c, {var: p}))
    return Posynomial(out)


@dataclass
class GeometricProgram:
    """minimize ``objective`` s.t. ``g <= 1`` for each constraint, ``h == 1`` for each equality.

    ``upper_bounds`` are turned into ``x / ub <= 1`` constraints when solving.
    ``names`` optionally labels the inequality constraints (same order).
    """

    objective: Expr
    constraints: list[Expr] = field(default_factory=list)
    equalities: list[Monomial] = field(default_factory=list)
    upper_bounds: dict[str, float] = field(default_factory=dict)
    variables: list[str] | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.objective = as_posynomial(self.objective)
        self.constraints = [as_posynomial(c) for c in self.constraints]
        for e in self.equalities:
            if not isinstance(e, Monomial):
                raise GPError("equality constraints must be monomials")
        used = set(self.objective.variables)
        for c in self.constraints:
            used |= c.variables
        for e in self.equalities:
            used |= e.variables
        used |= set(self.upper_bounds)
        if self.variables is None:
            self.variables = sorted(used)
        else:
            undeclared = used - set(self.variables)
            if undeclared:
                raise GPError(f"undeclared variable(s): {sorted(undeclared)}")
            if len(set(self.variables)) != len(self.variables):
                raise GPError("duplicate variable declaration")
        for k, ub in self.upper_bounds.items():
            if not ub > 0:
                raise GPError(f"upper bound for {k!r} must be positive")
        if self.names is not None and len(self.names) != len(self.constraints):
            raise GPError("names must label every inequality constraint")
        if not self.variables:
            raise GPError("program has no variables")

    def all_constraints(self) -> list[Posynomial]:
        """Inequality constraints followed by the upper-bound rows."""
        bounds = [Posynomial([Monomial(1.0 / ub, {k: 1.0})]) for k, ub in self.upper_bounds.items()]
        return list(self.constraints) + bounds

    def dumps(self) -> str:
        return dump_program(self)


# --- text format ----------------------------------------------------------------------


def format_monomial(m: Monomial) -> str:
    parts = [repr(m.coefficient)]
    parts += [f"{k}^{r!r}" for k, r in m.exponents.items()]
    return " * ".join(parts)


def format_posynomial(p: Expr) -> str:
    return " + ".join(format_monomial(t) for t in as_posynomial(p).terms)


def dump_program(gp: GeometricProgram) -> str:
    lines = ["variables: " + " ".join(gp.variables)]
    lines.append("minimize: " + format_posynomial(gp.objective))
    for k, ub in gp.upper_bounds.items():
        lines.append(f"bound: {k} <= {ub!r}")
    for i, c in enumerate(gp.constraints):
        label = f"[{gp.names[i]}] " if gp.names else ""
        lines.append(f"{label}{format_posynomial(c)} <= 1")
    for e in gp.equalities:
        lines.append(f"{format_monomial(e)} == 1")
    return "\n".join(lines) + "\n"


def _parse_monomial(text: str) -> Monomial:
    factors = [f.strip() for f in text.split("*")]
    coef = 1.0
    exps: dict[str, float] = {}
    for k, f in enumerate(factors):
        if "^" in f:
            name, power = f.split("^", 1)
            name = name.strip()
            exps[name] = exps.get(name, 0.0) + float(power)
        elif k == 0:
            coef = float(f)
        elif _NAME.match(f):
            exps[f] = exps.get(f, 0.0) + 1.0
        else:
            coef *= float(f)
    return Monomial(coef, exps)


def _parse_posynomial(text: str) -> Posynomial:
    # split on " + " only, so exponents such as 1e+3 survive
    return Posynomial([_parse_monomial(t) for t in re.split(r"\s\+\s", text.strip())])


def parse_program(text: str) -> GeometricProgram:
    variables = None
    objective = None
    constraints: list[Posynomial] = []
    names: list[str] = []
    equalities: list[Monomial] = []
    bounds: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("variables:"):
                variables = line.split(":", 1)[1].split()
            elif line.startswith("minimize:"):
                objective = _parse_posynomial(line.split(":", 1)[1])
            elif line.startswith("bound:"):
                name, ub = line.split(":", 1)[1].split("<=")
                bounds[name.strip()] = float(ub)
            elif line.endswith("== 1"):
                equalities.append(_parse_monomial(line[: -len("== 1")]))
            elif line.endswith("<= 1"):
                body = line[: -len("<= 1")]
                label = ""
                if body.startswith("["):
                    label, body = body[1:].split("]", 1)
                names.append(label)
                constraints.append(_parse_posynomial(body))
            else:
                raise GPError("unrecognised line")
        except (ValueError, GPError) as exc:
            raise GPError(f"line {lineno}: {exc}: {raw!r}") from exc
    if objective is None:
        raise GPError("missing 'minimize:' line")
    return GeometricProgram(
        objective, constraints, equalities, bounds, variables,
        names if any(names) else None,
    )
