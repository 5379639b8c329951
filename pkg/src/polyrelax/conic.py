"""Unified conic standard form shared by every relaxation builder.

A program maximizes a linear objective over one free block, one nonnegative
block and any number of PSD blocks, subject to equality rows; for the
hierarchy builders each row matches one monomial coefficient.  PSD data is
stored in scaled vector form (svec) so that matrix inner products become
plain dot products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polycore import Monomial, Polynomial

_SQRT2 = math.sqrt(2.0)


def svec_dim(k: int) -> int:
    return k * (k + 1) // 2


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix: <A, B> = svec(A).svec(B).

    Entries are ordered column-major over the upper triangle, off-diagonals
    scaled by sqrt(2).
    """
    k = mat.shape[0]
    out = np.empty(svec_dim(k))
    pos = 0
    for j in range(k):
        for i in range(j + 1):
            out[pos] = mat[i, j] if i == j else _SQRT2 * mat[i, j]
            pos += 1
    return out


def smat(vec: np.ndarray, k: int) -> np.ndarray:
    """Inverse of ``svec``."""
    out = np.zeros((k, k))
    pos = 0
    for j in range(k):
        for i in range(j + 1):
            if i == j:
                out[i, j] = vec[pos]
            else:
                out[i, j] = out[j, i] = vec[pos] / _SQRT2
            pos += 1
    return out


@dataclass
class ConicProgram:
    """Maximize c'x over {x : A x = b, x in F x R+^p x PSD blocks}.

    Rows are keyed by ``row_monomials`` when the program matches polynomial
    coefficients (one row per monomial); metadata records which hierarchy
    produced the program and at which level.
    """

    free_names: list
    nonneg_labels: list
    psd_dims: list
    psd_names: list
    A_free: np.ndarray  # (m, n_free)
    A_nonneg: np.ndarray  # (m, n_nonneg)
    A_psd: list  # per block: (m, svec_dim(dim))
    b: np.ndarray  # (m,)
    c_free: np.ndarray
    c_nonneg: np.ndarray
    c_psd: list  # per block: (svec_dim(dim),)
    row_monomials: list
    hierarchy: str = ""
    d: int = 0
    k: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    @property
    def n_free(self) -> int:
        return self.A_free.shape[1]

    @property
    def n_nonneg(self) -> int:
        return self.A_nonneg.shape[1]

    @property
    def n_variables(self) -> int:
        """Scalar variable count: free + nonnegative + PSD upper triangles."""
        return self.n_free + self.n_nonneg + sum(svec_dim(d) for d in self.psd_dims)

    def validate(self) -> None:
        m = self.n_rows
        if self.A_free.shape != (m, len(self.free_names)):
            raise ValueError("free block shape mismatch")
        if self.A_nonneg.shape != (m, len(self.nonneg_labels)):
            raise ValueError("nonneg block shape mismatch")
        if len(self.A_psd) != len(self.psd_dims):
            raise ValueError("PSD block count mismatch")
        for mat, dim in zip(self.A_psd, self.psd_dims):
            if mat.shape != (m, svec_dim(dim)):
                raise ValueError("PSD block shape mismatch")
        if self.c_free.shape != (self.n_free,) or self.c_nonneg.shape != (self.n_nonneg,):
            raise ValueError("objective shape mismatch")


def empty_program(
    m: int,
    free_names: list,
    nonneg_labels: list,
    psd_dims: list,
    psd_names: list,
) -> ConicProgram:
    return ConicProgram(
        free_names=list(free_names),
        nonneg_labels=list(nonneg_labels),
        psd_dims=list(psd_dims),
        psd_names=list(psd_names),
        A_free=np.zeros((m, len(free_names))),
        A_nonneg=np.zeros((m, len(nonneg_labels))),
        A_psd=[np.zeros((m, svec_dim(d))) for d in psd_dims],
        b=np.zeros(m),
        c_free=np.zeros(len(free_names)),
        c_nonneg=np.zeros(len(nonneg_labels)),
        c_psd=[np.zeros(svec_dim(d)) for d in psd_dims],
        row_monomials=[None] * m,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def dump_text(program: ConicProgram) -> str:
    """Canonical text form used by golden-file tests.

    One line per equality row: the row monomial, the right-hand side, then
    the sparse coefficients block by block (PSD entries as symmetric matrix
    entries over the upper triangle).
    """
    k_text = "-" if program.k is None else str(program.k)
    lines = [
        f"conic-program hierarchy={program.hierarchy} d={program.d} k={k_text} sense=max",
        f"blocks free={program.n_free} nonneg={program.n_nonneg} "
        f"psd={','.join(str(d) for d in program.psd_dims) or '-'}",
    ]
    for r in range(program.n_rows):
        mono = program.row_monomials[r]
        parts = [f"mono={mono}", f"rhs={_fmt(program.b[r])}"]
        for j, name in enumerate(program.free_names):
            if program.A_free[r, j] != 0.0:
                parts.append(f"{name}={_fmt(program.A_free[r, j])}")
        for j in range(program.n_nonneg):
            if program.A_nonneg[r, j] != 0.0:
                parts.append(f"L{j}={_fmt(program.A_nonneg[r, j])}")
        for bidx, dim in enumerate(program.psd_dims):
            mat = smat(program.A_psd[bidx][r], dim)
            for i in range(dim):
                for j in range(i, dim):
                    if abs(mat[i, j]) > 1e-15:
                        parts.append(
                            f"{program.psd_names[bidx]}[{i},{j}]={_fmt(mat[i, j])}"
                        )
        lines.append(" | ".join(parts))
    return "\n".join(lines) + "\n"


@dataclass
class Certificate:
    """Positivity certificate data extracted from an optimal solve.

    ``lam`` maps multiplier labels to values: exponent-pair labels
    ``(alpha, beta)`` for the product hierarchies, ``(ell, I, J)`` triples
    for the 0/1 builders.  ``gram`` holds the PSD blocks (the single SOS
    block, or one block per constraint for the Putinar hierarchy); ``h``
    holds the free polynomial multipliers of the 0/1 builders.
    """

    hierarchy: str
    t: float
    lam: dict
    gram: list | None = None
    h: list | None = None
    bound_original_units: float = 0.0

    def validate(self) -> None:
        for label, value in self.lam.items():
            if value < -1e-9:
                raise ValueError(f"multiplier {label} is negative: {value}")
        if self.gram is not None:
            for q in self.gram:
                eigs = np.linalg.eigvalsh((q + q.T) / 2.0)
                if eigs[0] < -1e-7 * (1.0 + max(eigs[-1], 0.0)):
                    raise ValueError(
                        f"Gram block min eigenvalue {eigs[0]} below PSD tolerance"
                    )
