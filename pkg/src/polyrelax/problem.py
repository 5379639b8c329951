"""Problem model, normalization to the unit box, constraint lifting, and the
problem-file text format.

A problem is ``min f(x)`` over the set cut out by inequality constraints
``g_j(x) >= 0`` intersected with per-variable boxes or binary domains.
``normalize`` rewrites any such instance over the unit box [0, 1]^n with
every constraint certified (by interval arithmetic) to take values in
[0, 1] on the feasible set, which is the form every relaxation builder
consumes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from .polycore import (
    Monomial,
    Polynomial,
    constraint_product,
    grlex_key,
    mono_count,
    mono_index_set,
)


class ProblemError(ValueError):
    """Invalid problem data."""


class NormalizationError(ProblemError):
    """Instance cannot be normalized (unbounded variable, vacuous constraint)."""


class ParseError(ProblemError):
    """Problem text does not conform to the file format."""

    def __init__(self, message: str, line: int, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class VarKind:
    """Domain tag for one variable: a finite box or a binary 0/1 domain."""

    kind: str  # "box" | "binary"
    lo: float = 0.0
    hi: float = 1.0

    @classmethod
    def box(cls, lo: float, hi: float) -> "VarKind":
        return cls("box", float(lo), float(hi))

    @classmethod
    def binary(cls) -> "VarKind":
        return cls("binary", 0.0, 1.0)


ORIGIN_INPUT = "input"
ORIGIN_BOX = "box"


@dataclass(frozen=True)
class ProblemInstance:
    """A polynomial minimization problem, possibly normalized.

    ``constraints`` are the inequality polynomials, meaning g_j(x) >= 0;
    ``constraint_origins`` tags each one as user input or as a box row added
    during normalization.  After ``normalize`` the instance lives on
    [0, 1]^n, the list contains x_i and 1 - x_i for every variable, and
    ``enclosures`` certifies 0 <= g_j <= 1 on the feasible set.  Bounds
    reported downstream map back to original units through
    ``objective_scale * bound + objective_offset``.
    """

    n: int
    var_names: tuple
    objective: Polynomial
    constraints: tuple
    kinds: tuple
    constraint_origins: tuple = ()
    normalized: bool = False
    objective_offset: float = 0.0
    objective_scale: float = 1.0
    enclosures: tuple = ()
    name: str = "instance"

    def __post_init__(self):
        if self.objective.n != self.n:
            raise ProblemError("objective variable count does not match instance")
        for g in self.constraints:
            if g.n != self.n:
                raise ProblemError("constraint variable count does not match instance")
        if len(self.kinds) != self.n:
            raise ProblemError("one kind per variable required")
        if self.objective_scale <= 0:
            raise ProblemError("objective scale must be positive")
        if not self.constraint_origins:
            object.__setattr__(
                self, "constraint_origins", (ORIGIN_INPUT,) * len(self.constraints)
            )
        if len(self.constraint_origins) != len(self.constraints):
            raise ProblemError("one origin tag per constraint required")

    @property
    def m(self) -> int:
        return len(self.constraints)

    def is_binary(self) -> bool:
        return all(k.kind == "binary" for k in self.kinds)

    def input_constraints(self) -> list[Polynomial]:
        return [
            g
            for g, o in zip(self.constraints, self.constraint_origins)
            if o == ORIGIN_INPUT
        ]

    def to_original_units(self, bound: float) -> float:
        return self.objective_scale * bound + self.objective_offset

    def max_constraint_degree(self) -> int:
        if not self.constraints:
            return 0
        return max(g.degree for g in self.constraints)


# ---------------------------------------------------------------------------
# Interval arithmetic over the unit box
# ---------------------------------------------------------------------------


def unit_box_range(poly: Polynomial) -> tuple[float, float]:
    """Certified enclosure of a polynomial over [0, 1]^n.

    Monomial-wise: x^a ranges over [0, 1] for a != 0, so the term c*x^a
    contributes [min(c, 0), max(c, 0)]; the constant term contributes
    [c, c].  The sum over-approximates, never under-approximates.
    """
    lo = 0.0
    hi = 0.0
    for mono, coeff in poly.terms.items():
        if sum(mono) == 0:
            lo += coeff
            hi += coeff
        else:
            lo += min(coeff, 0.0)
            hi += max(coeff, 0.0)
    return lo, hi


def substitute_affine(
    poly: Polynomial, offsets: Sequence[float], widths: Sequence[float]
) -> Polynomial:
    """Substitute x_i = offsets[i] + widths[i] * u_i into the polynomial."""
    n = poly.n
    out = Polynomial.zero(n)
    axis = [
        Polynomial.constant(n, offsets[i]) + Polynomial.variable(n, i) * widths[i]
        for i in range(n)
    ]
    for mono, coeff in poly.terms.items():
        term = Polynomial.constant(n, coeff)
        for i, e in enumerate(mono):
            if e:
                term = term.mul(axis[i].pow(e))
        out = out.add(term)
    return out


def normalize(instance: ProblemInstance) -> ProblemInstance:
    """Rewrite an instance over [0, 1]^n with constraints certified in [0, 1].

    Idempotent.  Box variables are mapped affinely onto [0, 1]; box rows
    x_i >= 0 and 1 - x_i >= 0 are appended for every variable when absent;
    each constraint is divided by its interval upper bound over the unit box
    so it cannot exceed 1 on the feasible set.  Objective values are
    preserved by the substitution, so the offset/scale bookkeeping carries
    over unchanged.
    """
    if instance.normalized:
        return instance
    n = instance.n
    offsets = []
    widths = []
    for name, kind in zip(instance.var_names, instance.kinds):
        if kind.kind == "binary":
            offsets.append(0.0)
            widths.append(1.0)
            continue
        if kind.kind != "box" or not (math.isfinite(kind.lo) and math.isfinite(kind.hi)):
            raise NormalizationError(f"variable {name} is unbounded")
        if kind.hi <= kind.lo:
            raise NormalizationError(f"variable {name} has empty box [{kind.lo}, {kind.hi}]")
        offsets.append(kind.lo)
        widths.append(kind.hi - kind.lo)

    identity = all(o == 0.0 and w == 1.0 for o, w in zip(offsets, widths))

    def subst(p: Polynomial) -> Polynomial:
        return p if identity else substitute_affine(p, offsets, widths)

    objective = subst(instance.objective)

    constraints: list[Polynomial] = []
    origins: list[str] = []
    enclosures: list[tuple[float, float]] = []
    for g, origin in zip(instance.constraints, instance.constraint_origins):
        gs = subst(g)
        lo, hi = unit_box_range(gs)
        if hi <= 0.0:
            raise NormalizationError(
                "constraint is certifiably infeasible or vacuous: "
                f"interval upper bound {hi} <= 0 over the box"
            )
        scaled = gs.scale(1.0 / hi)
        constraints.append(scaled)
        origins.append(origin)
        enclosures.append((max(0.0, lo / hi), 1.0))

    # Box rows keep the multiplier family rich enough to certify positivity
    # on the unit box; skip exact duplicates already present.
    existing = {tuple(sorted(g.terms.items())) for g in constraints}
    for i in range(n):
        xi = Polynomial.variable(n, i)
        for g in (xi, Polynomial.constant(n, 1.0) - xi):
            key = tuple(sorted(g.terms.items()))
            if key in existing:
                continue
            existing.add(key)
            constraints.append(g)
            origins.append(ORIGIN_BOX)
            enclosures.append((0.0, 1.0))

    kinds = tuple(
        k if k.kind == "binary" else VarKind.box(0.0, 1.0) for k in instance.kinds
    )
    return ProblemInstance(
        n=n,
        var_names=instance.var_names,
        objective=objective,
        constraints=tuple(constraints),
        kinds=kinds,
        constraint_origins=tuple(origins),
        normalized=True,
        objective_offset=instance.objective_offset,
        objective_scale=instance.objective_scale,
        enclosures=tuple(enclosures),
        name=instance.name,
    )


# ---------------------------------------------------------------------------
# Constraint lifting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductConstraintSet:
    """The redundant product constraints of the lifted problem at level d.

    ``pairs`` lists ((alpha, beta), polynomial) for every exponent pair with
    1 <= |alpha| + |beta| <= d, graded-lex ordered on the concatenated
    vector.  The empty pair, whose product is the constant 1, is recorded
    separately and never enters the multiplier list.
    """

    d: int
    m: int
    pairs: tuple  # of ((alpha, beta), Polynomial)
    empty_pair: tuple  # ((0,..), (0,..)), Polynomial 1


def lift_products(instance: ProblemInstance, d: int) -> ProductConstraintSet:
    """Expand all products g^alpha (1-g)^beta with 1 <= |alpha|+|beta| <= d."""
    if not instance.normalized:
        raise ProblemError("lift_products requires a normalized instance")
    if d < 1:
        raise ProblemError(f"lift level must be >= 1, got {d}")
    g = list(instance.constraints)
    m = len(g)
    pairs = []
    for vec in mono_index_set(2 * m, d):
        if sum(vec) == 0:
            continue
        alpha = vec[:m]
        beta = vec[m:]
        pairs.append(((alpha, beta), constraint_product(g, alpha, beta)))
    zero = (0,) * m
    empty = ((zero, zero), Polynomial.constant(instance.n, 1.0))
    return ProductConstraintSet(d=d, m=m, pairs=tuple(pairs), empty_pair=empty)


# ---------------------------------------------------------------------------
# Problem text format
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*^]))"
)


def _tokenize(expr: str, line_no: int, col_offset: int):
    pos = 0
    tokens = []
    while pos < len(expr):
        match = _TOKEN_RE.match(expr, pos)
        if match is None:
            stripped = expr[pos:].lstrip()
            if not stripped:
                break
            col = col_offset + pos + (len(expr[pos:]) - len(stripped)) + 1
            raise ParseError(f"unexpected character {stripped[0]!r}", line_no, col)
        col = col_offset + match.start(match.lastgroup) + 1
        tokens.append((match.lastgroup, match.group(match.lastgroup), col))
        pos = match.end()
    return tokens


def parse_poly_expr(
    expr: str, var_index: dict, n: int, line_no: int, col_offset: int = 0
) -> Polynomial:
    """Parse a sum of signed monomial terms (``+ - * ^``, no parentheses)."""
    tokens = _tokenize(expr, line_no, col_offset)
    if not tokens:
        raise ParseError("empty expression", line_no, col_offset + 1)
    poly = Polynomial.zero(n)
    i = 0
    while i < len(tokens):
        sign = 1.0
        while i < len(tokens) and tokens[i][0] == "op" and tokens[i][1] in "+-":
            if tokens[i][1] == "-":
                sign = -sign
            i += 1
        if i >= len(tokens):
            raise ParseError("dangling sign", line_no, tokens[-1][2])
        coeff = sign
        mono = [0] * n
        expect_factor = True
        while expect_factor:
            kind, value, col = tokens[i]
            if kind == "num":
                lit = float(value)
                if not math.isfinite(lit):
                    raise ParseError(f"non-finite literal {value!r}", line_no, col)
                coeff *= lit
                i += 1
            elif kind == "ident":
                if value not in var_index:
                    raise ParseError(f"unknown variable {value!r}", line_no, col)
                exponent = 1
                i += 1
                if i < len(tokens) and tokens[i][0] == "op" and tokens[i][1] == "^":
                    i += 1
                    if i >= len(tokens) or tokens[i][0] != "num":
                        raise ParseError("exponent expected after '^'", line_no, col)
                    exp_text = tokens[i][1]
                    if not exp_text.isdigit():
                        raise ParseError(
                            f"integer exponent expected, got {exp_text!r}",
                            line_no,
                            tokens[i][2],
                        )
                    exponent = int(exp_text)
                    i += 1
                mono[var_index[value]] += exponent
            else:
                raise ParseError(f"unexpected operator {value!r}", line_no, col)
            expect_factor = (
                i < len(tokens) and tokens[i][0] == "op" and tokens[i][1] == "*"
            )
            if expect_factor:
                i += 1
                if i >= len(tokens):
                    raise ParseError("dangling '*'", line_no, tokens[-1][2])
        poly = poly + Polynomial.monomial(n, tuple(mono), coeff)
    return poly


def parse_problem(text: str, name: str = "instance") -> ProblemInstance:
    """Parse the line-oriented problem format into an unnormalized instance."""
    var_names: list[str] = []
    var_index: dict = {}
    objective = None
    constraints: list[Polynomial] = []
    default_box = None
    per_var_box: dict = {}
    binary: set = set()
    seen_vars = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if ":" not in line:
            raise ParseError("expected '<keyword>: ...'", line_no, 1)
        head, _, rest = line.partition(":")
        keyword = head.strip()
        body = rest.strip()
        col_offset = line.index(":") + 1

        if not seen_vars:
            if keyword != "vars":
                raise ParseError("first line must declare 'vars:'", line_no, 1)
            for token in body.split():
                if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", token):
                    raise ParseError(f"invalid variable name {token!r}", line_no, 1)
                if token in var_index:
                    raise ParseError(f"duplicate variable {token!r}", line_no, 1)
                var_index[token] = len(var_names)
                var_names.append(token)
            if not var_names:
                raise ParseError("no variables declared", line_no, 1)
            seen_vars = True
            continue

        n = len(var_names)
        if keyword == "minimize":
            if objective is not None:
                raise ParseError("duplicate 'minimize:' line", line_no, 1)
            objective = parse_poly_expr(body, var_index, n, line_no, col_offset)
        elif keyword == "st":
            match = re.search(r"(>=|<=|==)", body)
            if match is None:
                raise ParseError("constraint needs '>= 0', '<= 0' or '== 0'", line_no, 1)
            expr = body[: match.start()]
            rhs = body[match.end() :].strip()
            if rhs != "0":
                raise ParseError("constraint right-hand side must be 0", line_no, 1)
            poly = parse_poly_expr(expr, var_index, n, line_no, col_offset)
            if match.group(1) == ">=":
                constraints.append(poly)
            elif match.group(1) == "<=":
                constraints.append(-poly)
            else:
                constraints.append(poly)
                constraints.append(-poly)
        elif keyword == "box":
            parts = body.split()
            if len(parts) != 2:
                raise ParseError("expected 'box: <lo> <hi>'", line_no, 1)
            try:
                lo, hi = float(parts[0]), float(parts[1])
            except ValueError:
                raise ParseError("box bounds must be numbers", line_no, 1) from None
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ParseError("box bounds must be finite", line_no, 1)
            default_box = (lo, hi)
        elif keyword.startswith("box ") or keyword.startswith("box\t"):
            ident = keyword[4:].strip()
            if ident not in var_index:
                raise ParseError(f"unknown variable {ident!r}", line_no, 1)
            parts = body.split()
            if len(parts) != 2:
                raise ParseError("expected 'box <var>: <lo> <hi>'", line_no, 1)
            try:
                lo, hi = float(parts[0]), float(parts[1])
            except ValueError:
                raise ParseError("box bounds must be numbers", line_no, 1) from None
            per_var_box[ident] = (lo, hi)
        elif keyword == "binary":
            for token in body.split():
                if token not in var_index:
                    raise ParseError(f"unknown variable {token!r}", line_no, 1)
                binary.add(token)
        else:
            raise ParseError(f"unknown keyword {keyword!r}", line_no, 1)

    if not seen_vars:
        raise ParseError("missing 'vars:' line", 1, 1)
    if objective is None:
        raise ParseError("missing 'minimize:' line", 1, 1)

    kinds = []
    for name_ in var_names:
        if name_ in binary:
            kinds.append(VarKind.binary())
        elif name_ in per_var_box:
            kinds.append(VarKind.box(*per_var_box[name_]))
        elif default_box is not None:
            kinds.append(VarKind.box(*default_box))
        else:
            kinds.append(VarKind("unbounded", -math.inf, math.inf))

    return ProblemInstance(
        n=len(var_names),
        var_names=tuple(var_names),
        objective=objective,
        constraints=tuple(constraints),
        kinds=tuple(kinds),
        name=name,
    )


def poly_to_text(poly: Polynomial, var_names: Sequence[str]) -> str:
    """Render a polynomial in the problem-file expression syntax."""
    if not poly.terms:
        return "0"
    pieces = []
    for idx, (mono, coeff) in enumerate(poly.sorted_terms()):
        sign = "-" if coeff < 0 else "+"
        mag = abs(coeff)
        factors = []
        if sum(mono) == 0 or mag != 1.0:
            factors.append(repr(mag))
        for i, e in enumerate(mono):
            if e == 1:
                factors.append(var_names[i])
            elif e > 1:
                factors.append(f"{var_names[i]}^{e}")
        term = "*".join(factors)
        if idx == 0:
            pieces.append(term if sign == "+" else f"-{term}")
        else:
            pieces.append(f"{sign} {term}")
    return " ".join(pieces)


def serialize_problem(instance: ProblemInstance) -> str:
    """Render an instance in the problem text format.

    Round-trips unnormalized instances structurally; for normalized
    instances the mathematical content survives but the normalized flag and
    origin tags do not (the format has no fields for them).
    """
    names = instance.var_names
    lines = [f"vars: {' '.join(names)}"]
    lines.append(f"minimize: {poly_to_text(instance.objective, names)}")
    for g in instance.constraints:
        lines.append(f"st: {poly_to_text(g, names)} >= 0")
    binaries = [n_ for n_, k in zip(names, instance.kinds) if k.kind == "binary"]
    for name_, kind in zip(names, instance.kinds):
        if kind.kind == "box":
            lines.append(f"box {name_}: {kind.lo!r} {kind.hi!r}")
    if binaries:
        lines.append(f"binary: {' '.join(binaries)}")
    return "\n".join(lines) + "\n"
