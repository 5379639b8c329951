"""Sparse multivariate polynomial arithmetic and Gram-basis machinery.

A monomial is a plain tuple of nonnegative integer exponents, one entry per
variable.  Every ordered iteration in the package uses the graded
lexicographic order (total degree first, then tuple comparison), which keeps
constraint rows, multiplier columns and hence solver behavior reproducible
run to run.

Coefficients are double precision floats.  Stored coefficients with
magnitude below ``ZERO_COEFF`` are dropped on construction; all identity
checks downstream are residual based, never exact equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

ZERO_COEFF = 1e-14

Monomial = tuple


def mono_degree(mono: Monomial) -> int:
    return sum(mono)


def grlex_key(mono: Monomial):
    """Sort key realizing the graded lexicographic order."""
    return (sum(mono), mono)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def mono_count(n: int, d: int) -> int:
    """Number of exponent vectors of length n with degree <= d: C(n+d, d)."""
    return math.comb(n + d, d)


def _compositions(total: int, n: int) -> Iterator[Monomial]:
    if n == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, n - 1):
            yield (head,) + rest


def mono_index_set(n: int, d: int) -> list[Monomial]:
    """All exponent vectors of length n with degree <= d, graded-lex ordered.

    The result has exactly ``mono_count(n, d)`` entries and, for fixed n, the
    list for degree d is a prefix of the list for degree d+1.
    """
    if n < 1:
        raise ValueError(f"variable count must be >= 1, got {n}")
    if d < 0:
        raise ValueError(f"degree bound must be >= 0, got {d}")
    out: list[Monomial] = []
    for total in range(d + 1):
        out.extend(_compositions(total, n))
    return out


@dataclass(frozen=True)
class Polynomial:
    """Sparse real polynomial over n variables.

    ``terms`` maps exponent tuples to nonzero float coefficients.  The zero
    polynomial has an empty map.  Instances are treated as immutable; all
    arithmetic returns new objects.
    """

    n: int
    terms: dict

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"variable count must be >= 1, got {self.n}")
        pruned = {}
        for mono, coeff in self.terms.items():
            if len(mono) != self.n:
                raise ValueError(
                    f"monomial {mono} has length {len(mono)}, expected {self.n}"
                )
            c = float(coeff)
            if abs(c) > ZERO_COEFF:
                pruned[tuple(int(e) for e in mono)] = c
        object.__setattr__(self, "terms", pruned)

    # ---- constructors -------------------------------------------------

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n, {})

    @classmethod
    def constant(cls, n: int, value: float) -> "Polynomial":
        return cls(n, {(0,) * n: value})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        if not 0 <= i < n:
            raise ValueError(f"variable index {i} out of range for n={n}")
        mono = tuple(1 if j == i else 0 for j in range(n))
        return cls(n, {mono: 1.0})

    @classmethod
    def monomial(cls, n: int, mono: Monomial, coeff: float = 1.0) -> "Polynomial":
        return cls(n, {tuple(mono): coeff})

    # ---- queries -------------------------------------------------------

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(m) for m in self.terms)

    def coeff(self, mono: Monomial) -> float:
        return self.terms.get(tuple(mono), 0.0)

    def sorted_terms(self) -> list[tuple[Monomial, float]]:
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))

    def is_zero(self) -> bool:
        return not self.terms

    # ---- arithmetic ----------------------------------------------------

    def _check_compatible(self, other: "Polynomial") -> None:
        if self.n != other.n:
            raise ValueError(
                f"variable count mismatch: {self.n} vs {other.n}"
            )

    def add(self, other: "Polynomial") -> "Polynomial":
        self._check_compatible(other)
        out = dict(self.terms)
        for mono, coeff in other.terms.items():
            out[mono] = out.get(mono, 0.0) + coeff
        return Polynomial(self.n, out)

    def mul(self, other: "Polynomial") -> "Polynomial":
        self._check_compatible(other)
        out: dict = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                mono = mono_mul(ma, mb)
                out[mono] = out.get(mono, 0.0) + ca * cb
        return Polynomial(self.n, out)

    def scale(self, factor: float) -> "Polynomial":
        return Polynomial(self.n, {m: c * factor for m, c in self.terms.items()})

    def pow(self, exponent: int) -> "Polynomial":
        if exponent < 0:
            raise ValueError("negative exponent")
        result = Polynomial.constant(self.n, 1.0)
        for _ in range(exponent):
            result = result.mul(self)
        return result

    def partial(self, i: int) -> "Polynomial":
        """Partial derivative with respect to variable i."""
        out: dict = {}
        for mono, coeff in self.terms.items():
            if mono[i] > 0:
                dm = list(mono)
                dm[i] -= 1
                out[tuple(dm)] = out.get(tuple(dm), 0.0) + coeff * mono[i]
        return Polynomial(self.n, out)

    def eval(self, point: Sequence[float]) -> float:
        """Evaluate at a real point by direct term summation."""
        if len(point) != self.n:
            raise ValueError(f"point has length {len(point)}, expected {self.n}")
        total = 0.0
        for mono, coeff in self.terms.items():
            term = coeff
            for xi, e in zip(point, mono):
                if e:
                    term *= xi ** e
            total += term
        return total

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on an (N, n) array of points."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.n:
            raise ValueError(f"expected (N, {self.n}) array, got {pts.shape}")
        out = np.zeros(pts.shape[0])
        for mono, coeff in self.terms.items():
            term = np.full(pts.shape[0], coeff)
            for i, e in enumerate(mono):
                if e:
                    term = term * pts[:, i] ** e
            out += term
        return out

    # ---- operators -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n, other)
        return self.add(other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n, other)
        return self.add(other.scale(-1.0))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        return self.mul(other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scale(-1.0)

    def __pow__(self, exponent: int):
        return self.pow(exponent)


def max_coeff_diff(p: Polynomial, q: Polynomial) -> float:
    """Largest absolute coefficient of p - q (the identity residual)."""
    diff = p - q
    if not diff.terms:
        return 0.0
    return max(abs(c) for c in diff.terms.values())


def constraint_product(
    g: Sequence[Polynomial], alpha: Sequence[int], beta: Sequence[int]
) -> Polynomial:
    """Product of constraint powers: prod g_j^alpha_j * prod (1-g_j)^beta_j.

    The empty product (alpha = beta = 0) is the constant polynomial 1.
    """
    if not (len(g) == len(alpha) == len(beta)):
        raise ValueError(
            f"length mismatch: {len(g)} constraints, alpha {len(alpha)}, beta {len(beta)}"
        )
    if not g:
        raise ValueError("empty constraint list")
    n = g[0].n
    result = Polynomial.constant(n, 1.0)
    one = Polynomial.constant(n, 1.0)
    for gj, aj, bj in zip(g, alpha, beta):
        if aj:
            result = result.mul(gj.pow(aj))
        if bj:
            result = result.mul((one - gj).pow(bj))
    return result


@dataclass(frozen=True)
class GramBasis:
    """Monomial basis v_k and the coefficient matrices of v_k v_k^T.

    For half-degree k over n variables, ``basis`` lists the s(k) = C(n+k, n)
    monomials of degree <= k in graded-lex order, and ``matrices`` maps each
    monomial b of degree <= 2k to the symmetric 0/1 matrix B_b with
    B_b[i, j] = 1 exactly when basis[i] + basis[j] = b.  Consequently
    v_k(x) v_k(x)^T = sum_b x^b B_b as a matrix of polynomials.
    """

    n: int
    k: int
    basis: tuple
    matrices: dict  # Monomial -> np.ndarray, symmetric (s, s)

    @property
    def size(self) -> int:
        return len(self.basis)


def gram_basis(n: int, k: int) -> GramBasis:
    """Build the Gram basis data for half-degree k over n variables."""
    if n < 1:
        raise ValueError(f"variable count must be >= 1, got {n}")
    if k < 0:
        raise ValueError(f"half-degree must be >= 0, got {k}")
    basis = mono_index_set(n, k)
    s = len(basis)
    matrices: dict = {}
    for mono in mono_index_set(n, 2 * k):
        matrices[mono] = np.zeros((s, s))
    for i, mi in enumerate(basis):
        for j, mj in enumerate(basis):
            matrices[mono_mul(mi, mj)][i, j] = 1.0
    return GramBasis(n=n, k=k, basis=tuple(basis), matrices=matrices)


def gram_polynomial(basis_monos: Sequence[Monomial], q: np.ndarray, n: int) -> Polynomial:
    """Expand v(x)^T Q v(x) into a Polynomial for a given monomial basis."""
    q = np.asarray(q, dtype=float)
    s = len(basis_monos)
    if q.shape != (s, s):
        raise ValueError(f"Gram matrix shape {q.shape} does not match basis size {s}")
    terms: dict = {}
    for i in range(s):
        for j in range(s):
            mono = mono_mul(basis_monos[i], basis_monos[j])
            terms[mono] = terms.get(mono, 0.0) + q[i, j]
    return Polynomial(n, terms)
