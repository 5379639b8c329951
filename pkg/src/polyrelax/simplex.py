"""Independent dense simplex oracle for PSD-free programs.

Used only to cross-check the interior-point solver on LPs: a two-phase
tableau simplex with Bland's rule, free variables split into differences of
nonnegatives.  Deliberately shares no code with :mod:`polyrelax.solver`.
"""

from __future__ import annotations

import time

import numpy as np

from .conic import ConicProgram
from .solver import SolveResult, Status

_PIVOT_TOL = 1e-9


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for r in range(tableau.shape[0]):
        if r != row and abs(tableau[r, col]) > 0.0:
            tableau[r] -= tableau[r, col] * tableau[row]
    basis[row] = col


def _price_and_pivot(
    tableau: np.ndarray,
    basis: np.ndarray,
    cost: np.ndarray,
    allowed: np.ndarray,
) -> tuple[str, int]:
    """Run simplex iterations to optimality; Bland's rule throughout."""
    m = tableau.shape[0]
    iterations = 0
    while True:
        # Reduced costs under the current basis.
        cb = cost[basis]
        reduced = cost - cb @ tableau[:, :-1]
        entering = -1
        for j in np.flatnonzero(allowed):
            if reduced[j] < -_PIVOT_TOL:
                entering = j
                break
        if entering < 0:
            return "optimal", iterations
        ratios = []
        for r in range(m):
            if tableau[r, entering] > _PIVOT_TOL:
                ratios.append((tableau[r, -1] / tableau[r, entering], basis[r], r))
        if not ratios:
            return "unbounded:%d" % entering, iterations
        ratios.sort(key=lambda t: (t[0], t[1]))
        _pivot(tableau, basis, ratios[0][2], entering)
        iterations += 1


def solve_lp_reference(program: ConicProgram) -> SolveResult:
    """Solve a PSD-free conic program with a two-phase simplex method.

    Restricted to at most 200 scalar variables; intended as a test oracle,
    not a production path.
    """
    if program.psd_dims:
        raise ValueError("the LP reference oracle does not accept PSD blocks")
    if program.n_variables > 200:
        raise ValueError(
            f"program has {program.n_variables} variables, oracle cap is 200"
        )
    t_start = time.perf_counter()

    Af = np.asarray(program.A_free, dtype=float)
    Al = np.asarray(program.A_nonneg, dtype=float)
    b = np.asarray(program.b, dtype=float)
    m = b.shape[0]
    nf = Af.shape[1]
    nl = Al.shape[1]

    # min form with free variables split: columns [f+, f-, nonneg].
    A = np.hstack([Af, -Af, Al])
    cost = np.concatenate(
        [-program.c_free, program.c_free, -np.asarray(program.c_nonneg, dtype=float)]
    )
    n_cols = A.shape[1]

    flip = b < 0
    A[flip] *= -1.0
    b_pos = np.where(flip, -b, b)

    # Phase 1 with one artificial per row.
    tableau = np.zeros((m, n_cols + m + 1))
    tableau[:, :n_cols] = A
    tableau[:, n_cols : n_cols + m] = np.eye(m)
    tableau[:, -1] = b_pos
    basis = np.arange(n_cols, n_cols + m)
    phase1_cost = np.zeros(n_cols + m)
    phase1_cost[n_cols:] = 1.0
    allowed = np.ones(n_cols + m, dtype=bool)

    outcome, pivots1 = _price_and_pivot(tableau, basis, phase1_cost, allowed)
    assert outcome == "optimal"  # phase 1 is always bounded below by 0
    phase1_obj = float(phase1_cost[basis] @ tableau[:, -1])
    total_ms = lambda: int(round((time.perf_counter() - t_start) * 1000))

    if phase1_obj > 1e-7:
        # Farkas certificate from the phase-1 duals (sign-corrected rows).
        try:
            cols = np.array(basis)
            B = np.zeros((m, m))
            full = np.hstack([A, np.eye(m)])
            for i, c in enumerate(cols):
                B[:, i] = full[:, c]
            y_mod = np.linalg.solve(B.T, phase1_cost[cols])
            y_cert = np.where(flip, -y_mod, y_mod)
        except np.linalg.LinAlgError:
            y_cert = np.zeros(m)
        return SolveResult(
            status=Status.INFEASIBLE,
            objective=float("-inf"),
            free=np.zeros(nf),
            nonneg=np.zeros(nl),
            psd=[],
            y=y_cert,
            residuals={"phase1": phase1_obj},
            iterations=pivots1,
            time_ms=total_ms(),
            certificate_ray={"y": y_cert},
            message="phase 1 optimum positive",
        )

    # Drive artificials out of the basis via degenerate pivots where possible.
    for r in range(m):
        if basis[r] >= n_cols:
            pivot_col = -1
            for j in range(n_cols):
                if abs(tableau[r, j]) > _PIVOT_TOL:
                    pivot_col = j
                    break
            if pivot_col >= 0:
                _pivot(tableau, basis, r, pivot_col)

    allowed = np.zeros(n_cols + m, dtype=bool)
    allowed[:n_cols] = True
    phase2_cost = np.concatenate([cost, np.zeros(m)])
    outcome, pivots2 = _price_and_pivot(tableau, basis, phase2_cost, allowed)

    x_full = np.zeros(n_cols + m)
    x_full[basis] = tableau[:, -1]

    if outcome.startswith("unbounded"):
        entering = int(outcome.split(":")[1])
        ray = np.zeros(n_cols)
        ray[entering] = 1.0
        for r in range(m):
            if basis[r] < n_cols:
                ray[basis[r]] = -tableau[r, entering]
        free_ray = ray[:nf] - ray[nf : 2 * nf]
        nonneg_ray = ray[2 * nf :]
        return SolveResult(
            status=Status.UNBOUNDED,
            objective=float("inf"),
            free=free_ray,
            nonneg=nonneg_ray,
            psd=[],
            y=np.zeros(m),
            residuals={},
            iterations=pivots1 + pivots2,
            time_ms=total_ms(),
            certificate_ray={"free": free_ray, "nonneg": nonneg_ray},
            message="improving ray found",
        )

    xf = x_full[:nf] - x_full[nf : 2 * nf]
    xl = x_full[2 * nf : 2 * nf + nl]
    objective = float(program.c_free @ xf + program.c_nonneg @ xl)

    # Duals for the original row order and signs.
    try:
        full = np.hstack([A, np.eye(m)])
        B = np.zeros((m, m))
        for i, c in enumerate(basis):
            B[:, i] = full[:, c]
        y_mod = np.linalg.solve(B.T, phase2_cost[np.array(basis)])
        y = np.where(flip, -y_mod, y_mod)
    except np.linalg.LinAlgError:
        y = np.zeros(m)

    primal_res = float(np.max(np.abs(Af @ xf + Al @ xl - b))) / (
        1.0 + float(np.max(np.abs(b))) if m else 1.0
    )
    return SolveResult(
        status=Status.OPTIMAL,
        objective=objective,
        free=xf,
        nonneg=xl,
        psd=[],
        y=y,
        residuals={"primal": primal_res},
        iterations=pivots1 + pivots2,
        time_ms=total_ms(),
        message="",
    )
