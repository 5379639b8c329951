"""Relaxation builders: translate a normalized instance into conic programs.

Five hierarchies share the standard form of :mod:`polyrelax.conic`:

* ``lp``      -- nonnegative combinations of constraint products (an LP);
* ``bsos``    -- the same multipliers plus one SOS block of fixed half
  degree k, so the PSD block size is C(n+k, n) independent of the level;
* ``putinar`` -- one SOS multiplier per constraint with block sizes that
  grow with the level;
* ``rlt01``   -- the 0/1 lift-and-project LP with free multipliers on the
  binary identities x_i (1 - x_i);
* ``bsos01``  -- ``rlt01`` plus the fixed-size SOS block.

Every builder is a pure function of (instance, level, k); emitted programs
are never mutated afterwards.
"""

from __future__ import annotations

import math
import warnings
from itertools import combinations

import numpy as np

from .conic import Certificate, ConicProgram, empty_program, smat, svec, svec_dim
from .polycore import (
    Polynomial,
    gram_basis,
    mono_index_set,
    mono_mul,
)
from .problem import ProblemError, ProblemInstance, lift_products


def _require_normalized(instance: ProblemInstance) -> None:
    if not instance.normalized:
        raise ProblemError("builder requires a normalized instance")


def _row_index(row_monomials) -> dict:
    return {mono: i for i, mono in enumerate(row_monomials)}


def _fill_poly_column(A: np.ndarray, col: int, poly: Polynomial, row_pos: dict) -> None:
    for mono, coeff in poly.terms.items():
        A[row_pos[mono], col] += coeff


def _degree_budget(instance: ProblemInstance, d: int) -> int:
    # Taking the max with deg f guarantees every objective monomial has a
    # matching row; unmatched rows would otherwise force silent infeasibility.
    return max(instance.objective.degree, d * instance.max_constraint_degree())


def build_lp(instance: ProblemInstance, d: int) -> ConicProgram:
    """Level-d LP relaxation over the constraint-product multipliers."""
    _require_normalized(instance)
    if d < 1:
        raise ProblemError(f"level must be >= 1, got {d}")
    prods = lift_products(instance, d)
    s = _degree_budget(instance, d)
    rows = mono_index_set(instance.n, s)
    row_pos = _row_index(rows)
    labels = [label for label, _ in prods.pairs]

    prog = empty_program(len(rows), ["t"], labels, [], [])
    prog.row_monomials = rows
    prog.hierarchy = "lp"
    prog.d = d
    prog.c_free[0] = 1.0
    prog.A_free[row_pos[(0,) * instance.n], 0] = 1.0
    for j, (_, poly) in enumerate(prods.pairs):
        _fill_poly_column(prog.A_nonneg, j, poly, row_pos)
    for mono, coeff in instance.objective.terms.items():
        prog.b[row_pos[mono]] = coeff
    prog.meta = {"pairs": tuple(labels), "degree_budget": s}
    return prog


def build_bsos(instance: ProblemInstance, d: int, k: int) -> ConicProgram:
    """Level-d relaxation with one SOS block of half-degree k.

    The PSD block has size C(n+k, n) for every level d.  If 2k exceeds the
    degree budget, k is clamped down with a warning; k = 0 reproduces the LP
    up to one redundant nonnegative scalar.
    """
    _require_normalized(instance)
    if d < 1:
        raise ProblemError(f"level must be >= 1, got {d}")
    if k < 0:
        raise ProblemError(f"k must be >= 0, got {k}")
    s = _degree_budget(instance, d)
    k_eff = k
    if 2 * k > s:
        k_eff = s // 2
        warnings.warn(
            f"SOS half-degree k={k} exceeds the degree budget {s}; clamped to {k_eff}",
            stacklevel=2,
        )
    prods = lift_products(instance, d)
    rows = mono_index_set(instance.n, s)
    row_pos = _row_index(rows)
    labels = [label for label, _ in prods.pairs]
    gb = gram_basis(instance.n, k_eff)

    prog = empty_program(len(rows), ["t"], labels, [gb.size], ["Q"])
    prog.row_monomials = rows
    prog.hierarchy = "bsos"
    prog.d = d
    prog.k = k_eff
    prog.c_free[0] = 1.0
    prog.A_free[row_pos[(0,) * instance.n], 0] = 1.0
    for j, (_, poly) in enumerate(prods.pairs):
        _fill_poly_column(prog.A_nonneg, j, poly, row_pos)
    for mono, mat in gb.matrices.items():
        prog.A_psd[0][row_pos[mono]] = svec(mat)
    for mono, coeff in instance.objective.terms.items():
        prog.b[row_pos[mono]] = coeff
    prog.meta = {
        "pairs": tuple(labels),
        "degree_budget": s,
        "gram_basis": gb.basis,
        "k_requested": k,
    }
    return prog


def build_putinar(instance: ProblemInstance, d: int) -> ConicProgram:
    """Level-d SOS-multiplier relaxation: f - t = s_0 + sum_j s_j g_j.

    Each s_j is an SOS polynomial with degree(s_j g_j) <= 2d, so block j has
    size C(n + d - ceil(deg g_j / 2), n) and the blocks grow with d.
    """
    _require_normalized(instance)
    n = instance.n
    floor_f = math.ceil(instance.objective.degree / 2)
    floor_g = math.ceil(instance.max_constraint_degree() / 2)
    if d < max(floor_f, floor_g, 1):
        raise ProblemError(
            f"level {d} is below the degree floor {max(floor_f, floor_g, 1)}"
        )
    rows = mono_index_set(n, 2 * d)
    row_pos = _row_index(rows)

    bases = [mono_index_set(n, d)]
    for g in instance.constraints:
        bases.append(mono_index_set(n, d - math.ceil(g.degree / 2)))
    dims = [len(b) for b in bases]
    names = [f"S{j}" for j in range(len(bases))]

    prog = empty_program(len(rows), ["t"], [], dims, names)
    prog.row_monomials = rows
    prog.hierarchy = "putinar"
    prog.d = d
    prog.c_free[0] = 1.0
    prog.A_free[row_pos[(0,) * n], 0] = 1.0

    multipliers = [Polynomial.constant(n, 1.0)] + list(instance.constraints)
    sqrt2 = math.sqrt(2.0)
    for bidx, (basis, g) in enumerate(zip(bases, multipliers)):
        A = prog.A_psd[bidx]
        pos = 0
        for b_col in range(len(basis)):
            for a_row in range(b_col + 1):
                scale = 1.0 if a_row == b_col else sqrt2
                pair = mono_mul(basis[a_row], basis[b_col])
                for mono, coeff in g.terms.items():
                    A[row_pos[mono_mul(pair, mono)], pos] += scale * coeff
                pos += 1
    for mono, coeff in instance.objective.terms.items():
        prog.b[row_pos[mono]] = coeff
    prog.meta = {"bases": tuple(tuple(b) for b in bases)}
    return prog


def rlt_multiplier_labels(n: int, m: int, d: int) -> list:
    """Deterministic (ell, I, J) labels for the 0/1 builders.

    ell = 0 stands for the constant 1, ell = 1..m for the affine input
    constraints; I and J are disjoint variable index sets with
    |I| + |J| <= d.  The (0, empty, empty) label is omitted because its
    constant column duplicates the role of t.
    """
    subsets = []
    for size in range(d + 1):
        level = []
        for i_size in range(size + 1):
            for I in combinations(range(n), i_size):
                rest = [v for v in range(n) if v not in I]
                for J in combinations(rest, size - i_size):
                    level.append((I, J))
        level.sort()
        subsets.extend(level)
    labels = []
    for ell in range(m + 1):
        for I, J in subsets:
            if ell == 0 and not I and not J:
                continue
            labels.append((ell, I, J))
    return labels


def _rlt_column_poly(instance: ProblemInstance, g_input: list, label) -> Polynomial:
    ell, I, J = label
    n = instance.n
    poly = Polynomial.constant(n, 1.0) if ell == 0 else g_input[ell - 1]
    for i in I:
        poly = poly.mul(Polynomial.variable(n, i))
    one = Polynomial.constant(n, 1.0)
    for j in J:
        poly = poly.mul(one - Polynomial.variable(n, j))
    return poly


def _validate_rlt_instance(instance: ProblemInstance) -> list:
    _require_normalized(instance)
    if not instance.is_binary():
        raise ProblemError("0/1 builders require every variable to be binary")
    g_input = instance.input_constraints()
    for g in g_input:
        if g.degree > 1:
            raise ProblemError("0/1 builders require affine input constraints")
    return g_input


def _build_rlt(instance: ProblemInstance, d: int, k: int | None) -> ConicProgram:
    if d < 1:
        raise ProblemError(f"level must be >= 1, got {d}")
    g_input = _validate_rlt_instance(instance)
    n = instance.n
    m = len(g_input)
    labels = rlt_multiplier_labels(n, m, d)
    col_polys = [_rlt_column_poly(instance, g_input, lab) for lab in labels]

    h_basis = mono_index_set(n, d - 1)
    h_polys = []  # one per (variable, basis monomial)
    free_names = ["t"]
    for i in range(n):
        xi = Polynomial.variable(n, i)
        gate = xi - xi.mul(xi)
        for mono in h_basis:
            h_polys.append(Polynomial.monomial(n, mono).mul(gate))
            free_names.append(f"h{i}[{','.join(str(e) for e in mono)}]")

    s = max(
        instance.objective.degree,
        max((p.degree for p in col_polys), default=0),
        max((p.degree for p in h_polys), default=0),
    )
    k_eff = None
    if k is not None:
        if k < 0:
            raise ProblemError(f"k must be >= 0, got {k}")
        k_eff = k
        if 2 * k > s:
            k_eff = s // 2
            warnings.warn(
                f"SOS half-degree k={k} exceeds the degree budget {s}; clamped to {k_eff}",
                stacklevel=3,
            )

    rows = mono_index_set(n, s)
    row_pos = _row_index(rows)
    psd_dims = []
    psd_names = []
    gb = None
    if k_eff is not None:
        gb = gram_basis(n, k_eff)
        psd_dims = [gb.size]
        psd_names = ["Q"]

    prog = empty_program(len(rows), free_names, labels, psd_dims, psd_names)
    prog.row_monomials = rows
    prog.hierarchy = "rlt01" if k_eff is None else "bsos01"
    prog.d = d
    prog.k = k_eff
    prog.c_free[0] = 1.0
    prog.A_free[row_pos[(0,) * n], 0] = 1.0
    for col, poly in enumerate(h_polys, start=1):
        _fill_poly_column(prog.A_free, col, poly, row_pos)
    for col, poly in enumerate(col_polys):
        _fill_poly_column(prog.A_nonneg, col, poly, row_pos)
    if gb is not None:
        for mono, mat in gb.matrices.items():
            prog.A_psd[0][row_pos[mono]] = svec(mat)
    for mono, coeff in instance.objective.terms.items():
        prog.b[row_pos[mono]] = coeff
    prog.meta = {
        "labels": tuple(labels),
        "h_basis": tuple(h_basis),
        "degree_budget": s,
    }
    if gb is not None:
        prog.meta["gram_basis"] = gb.basis
        prog.meta["k_requested"] = k
    return prog


def build_rlt01(instance: ProblemInstance, d: int) -> ConicProgram:
    """Level-d 0/1 lift-and-project LP (products of single constraints with
    variable/complement subsets; no products between input constraints)."""
    return _build_rlt(instance, d, None)


def build_bsos01(instance: ProblemInstance, d: int, k: int) -> ConicProgram:
    """The 0/1 LP of :func:`build_rlt01` strengthened by one SOS block."""
    return _build_rlt(instance, d, k)


def sos_bound_program(poly: Polynomial, k: int) -> ConicProgram:
    """max t such that poly - t is an SOS of half-degree k.

    Infeasible whenever poly has coefficients of degree above 2k that no SOS
    of that degree can reproduce.
    """
    n = poly.n
    gb = gram_basis(n, k)
    s = max(poly.degree, 2 * k)
    rows = mono_index_set(n, s)
    row_pos = _row_index(rows)
    prog = empty_program(len(rows), ["t"], [], [gb.size], ["Q"])
    prog.row_monomials = rows
    prog.hierarchy = "sos-bound"
    prog.k = k
    prog.c_free[0] = 1.0
    prog.A_free[row_pos[(0,) * n], 0] = 1.0
    for mono, mat in gb.matrices.items():
        prog.A_psd[0][row_pos[mono]] = svec(mat)
    for mono, coeff in poly.terms.items():
        prog.b[row_pos[mono]] = coeff
    prog.meta = {"gram_basis": gb.basis}
    return prog


def certificate_from_result(
    program: ConicProgram, result, instance: ProblemInstance
) -> Certificate:
    """Assemble the certificate triple from an optimal solve of a builder
    program, with the bound mapped back to original objective units."""
    if result.status.name != "OPTIMAL":
        raise ValueError(f"certificate requires an optimal solve, got {result.status}")
    t = float(result.free[0])
    lam = {}
    for label, value in zip(program.nonneg_labels, result.nonneg):
        lam[label] = float(value)
    gram = None
    h = None
    if program.hierarchy in ("bsos", "bsos01", "sos-bound"):
        gram = [result.psd[0]]
    elif program.hierarchy == "putinar":
        gram = list(result.psd)
    if program.hierarchy in ("rlt01", "bsos01"):
        h_basis = program.meta["h_basis"]
        n = instance.n
        h = []
        values = result.free[1:]
        per_var = len(h_basis)
        for i in range(n):
            terms = {}
            for j, mono in enumerate(h_basis):
                terms[mono] = float(values[i * per_var + j])
            h.append(Polynomial(n, terms))
    cert = Certificate(
        hierarchy=program.hierarchy,
        t=t,
        lam=lam,
        gram=gram,
        h=h,
        bound_original_units=instance.to_original_units(t),
    )
    cert.validate()
    return cert
