"""Reference solver for the unified conic standard form.

A primal-dual path-following interior-point method on the homogeneous
self-dual embedding, with Nesterov-Todd scaling on PSD blocks, the standard
log barrier on the nonnegative block, and free variables eliminated directly
through the reduced Newton system.  LPs are simply the PSD-free special
case.  Infeasibility and unboundedness surface as verified certificate rays
of the embedding.

Numerical layout: each Newton direction is obtained from a reduced system
in (dy, dx_free, dtau) (Schur complement over the conic blocks, LU with
equilibration), optionally re-solved with the PSD directions kept explicit,
and then polished by iterative refinement against the full Newton system;
without that last step the conic back-substitution amplifies solve errors
by the inverse barrier parameter and primal feasibility hits a floor.

The module doubles as the backend contract: any adapter that consumes a
:class:`~polyrelax.conic.ConicProgram` and produces a :class:`SolveResult`
with the same status taxonomy can stand in for :func:`solve`.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .conic import ConicProgram, smat, svec


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_TROUBLE = "NumericalTrouble"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class SolverConfig:
    """Interior-point parameters.

    ``step_fraction`` is the fraction of the distance to the cone boundary
    taken each iteration; ``infeasibility_threshold`` is the floor on the
    embedding homogenization below which a missing certificate is reported
    as numerical trouble; ``predictor_corrector`` toggles the Mehrotra-style
    centering heuristic (two solves per iteration with one factorization).
    """

    tolerance: float = 1e-8
    max_iterations: int = 200
    step_fraction: float = 0.98
    infeasibility_threshold: float = 1e-10
    predictor_corrector: bool = True

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 < self.step_fraction < 1.0:
            raise ValueError("step fraction must lie in (0, 1)")


@dataclass
class SolveResult:
    """Outcome of one conic solve, in the program's maximize sense.

    ``objective`` is -inf for infeasible and +inf for unbounded programs;
    ``residuals`` carries primal feasibility, dual feasibility and relative
    duality gap; ``trace`` records one row per iteration
    (iteration, primal objective, dual objective, mu, primal res, dual res)
    of the internal minimization form.
    """

    status: Status
    objective: float
    free: np.ndarray
    nonneg: np.ndarray
    psd: list
    y: np.ndarray
    residuals: dict
    iterations: int
    time_ms: int
    trace: list = field(default_factory=list)
    certificate_ray: dict | None = None
    message: str = ""


def _sym(mat: np.ndarray) -> np.ndarray:
    return (mat + mat.T) / 2.0


def _nt_scaling(X: np.ndarray, S: np.ndarray) -> np.ndarray:
    """The unique W > 0 with W S W = X."""
    dx, ux = np.linalg.eigh(_sym(X))
    dx = np.clip(dx, 1e-300, None)
    xh = (ux * np.sqrt(dx)) @ ux.T
    mid = _sym(xh @ S @ xh)
    dm, um = np.linalg.eigh(mid)
    dm = np.clip(dm, 1e-300, None)
    mih = (um / np.sqrt(dm)) @ um.T
    return _sym(xh @ mih @ xh)


def _psd_step_bound(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX still PSD."""
    if not np.all(np.isfinite(dX)):
        return 0.0
    dx, ux = np.linalg.eigh(_sym(X))
    dx = np.clip(dx, 1e-300, None)
    li = (ux / np.sqrt(dx)) @ ux.T
    with np.errstate(over="ignore", invalid="ignore"):
        inner = _sym(li @ dX @ li.T)
    if not np.all(np.isfinite(inner)):
        return 0.0
    try:
        lam_min = np.linalg.eigvalsh(inner)[0]
    except np.linalg.LinAlgError:
        return 0.0
    if lam_min >= -1e-14:
        return np.inf
    return -1.0 / lam_min


def _vec_step_bound(x: np.ndarray, dx: np.ndarray) -> float:
    mask = dx < 0
    if not np.any(mask):
        return np.inf
    return float(np.min(-x[mask] / dx[mask]))


class _NewtonFailure(Exception):
    pass


class _KKTFactor:
    """Equilibrated LU factorization of a reduced Newton matrix."""

    def __init__(self, K: np.ndarray):
        self.K = K
        absK = np.abs(K)
        r = np.sqrt(absK.max(axis=1))
        r[r == 0.0] = 1.0
        scaled = K / r[:, None]
        c = np.sqrt(np.abs(scaled).max(axis=0))
        c[c == 0.0] = 1.0
        self.r = r
        self.c = c
        self.lu = lu_factor(scaled / c[None, :])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sol = lu_solve(self.lu, rhs / self.r) / self.c
        resid = rhs - self.K @ sol
        sol = sol + lu_solve(self.lu, resid / self.r) / self.c
        return sol


def solve(program: ConicProgram, config: SolverConfig | None = None) -> SolveResult:
    """Solve a conic program with the reference interior-point method."""
    cfg = config or SolverConfig()
    program.validate()
    t_start = time.perf_counter()

    Af = np.asarray(program.A_free, dtype=float)
    Al = np.asarray(program.A_nonneg, dtype=float)
    Ap = [np.asarray(mat, dtype=float) for mat in program.A_psd]
    b = np.asarray(program.b, dtype=float)
    dims = list(program.psd_dims)
    nblk = len(Ap)
    m = b.shape[0]
    nf = Af.shape[1]
    nl = Al.shape[1]

    # Row equilibration: scaling each equality row to unit max magnitude
    # changes nothing mathematically (duals are mapped back on exit) but
    # keeps the reported residuals and the endgame numerics scale free.
    row_scale = np.ones(m)
    for r in range(m):
        mags = [abs(b[r])]
        if nf:
            mags.append(float(np.max(np.abs(Af[r]))))
        if nl:
            mags.append(float(np.max(np.abs(Al[r]))))
        for mat in Ap:
            if mat.shape[1]:
                mags.append(float(np.max(np.abs(mat[r]))))
        s = max(mags)
        row_scale[r] = s if s > 0 else 1.0
    Af = Af / row_scale[:, None]
    Al = Al / row_scale[:, None]
    Ap = [mat / row_scale[:, None] for mat in Ap]
    b = b / row_scale

    # Internal minimization form.
    chf = -np.asarray(program.c_free, dtype=float)
    chl = -np.asarray(program.c_nonneg, dtype=float)
    chp = [-np.asarray(v, dtype=float) for v in program.c_psd]

    nu = nl + sum(dims)
    b_norm = 1.0 + (float(np.max(np.abs(b))) if m else 0.0)
    c_norm = 1.0 + max(
        [float(np.max(np.abs(chf))) if nf else 0.0]
        + [float(np.max(np.abs(chl))) if nl else 0.0]
        + [float(np.max(np.abs(v))) if v.size else 0.0 for v in chp]
    )

    xf = np.zeros(nf)
    xl = np.ones(nl)
    Xs = [np.eye(d) for d in dims]
    y = np.zeros(m)
    sl = np.ones(nl)
    Ss = [np.eye(d) for d in dims]
    tau = 1.0
    kappa = 1.0

    trace: list = []
    mu0 = None
    stall = 0

    def a_apply(vf, vl, vp_svecs):
        out = Af @ vf if nf else np.zeros(m)
        if nl:
            out = out + Al @ vl
        for mat, v in zip(Ap, vp_svecs):
            out = out + mat @ v
        return out

    def finish(status, objective, message="", ray=None, res=None, it=0):
        x_tau = max(tau, 1e-300)
        return SolveResult(
            status=status,
            objective=objective,
            free=xf / x_tau,
            nonneg=xl / x_tau,
            psd=[X / x_tau for X in Xs],
            y=y / x_tau / row_scale,
            residuals=res or {},
            iterations=it,
            time_ms=int(round((time.perf_counter() - t_start) * 1000)),
            trace=trace,
            certificate_ray=ray,
            message=message,
        )

    def try_infeasibility_certificates():
        # Farkas ray for primal infeasibility: b'y > 0 with -A'y in the dual cone.
        by = float(b @ y)
        if by > 1e-12:
            yc = y / by
            viol = 0.0
            if nf:
                viol = max(viol, float(np.max(np.abs(Af.T @ yc))))
            if nl:
                viol = max(viol, max(0.0, float(np.max(Al.T @ yc))))
            for mat, d in zip(Ap, dims):
                cand = smat(-(mat.T @ yc), d)
                viol = max(viol, max(0.0, -float(np.linalg.eigvalsh(_sym(cand))[0])))
            if viol <= 1e-6:
                return ("infeasible", {"y": yc / row_scale, "violation": viol})
        # Improving ray for unboundedness: feasible direction with c'x > 0.
        cx = float(chf @ xf + chl @ xl + sum(v @ svec(X) for v, X in zip(chp, Xs)))
        if cx < -1e-12:
            scale = -cx
            viol = float(np.max(np.abs(a_apply(xf, xl, [svec(X) for X in Xs])))) / scale
            if nl:
                viol = max(viol, max(0.0, -float(np.min(xl)) / scale))
            for X in Xs:
                viol = max(viol, max(0.0, -float(np.linalg.eigvalsh(_sym(X))[0]) / scale))
            if viol <= 1e-6:
                ray = {
                    "free": xf / scale,
                    "nonneg": xl / scale,
                    "psd": [X / scale for X in Xs],
                    "violation": viol,
                }
                return ("unbounded", ray)
        return None

    for it in range(cfg.max_iterations):
        x_svecs = [svec(X) for X in Xs]
        s_svecs = [svec(S) for S in Ss]

        rp = a_apply(xf, xl, x_svecs) - b * tau
        rd_f = (-(Af.T @ y) + chf * tau) if nf else np.zeros(0)
        rd_l = (-(Al.T @ y) + chl * tau - sl) if nl else np.zeros(0)
        rd_p = [
            -(mat.T @ y) + cv * tau - sv for mat, cv, sv in zip(Ap, chp, s_svecs)
        ]
        cx = float(chf @ xf + chl @ xl + sum(cv @ xv for cv, xv in zip(chp, x_svecs)))
        rg = float(b @ y) - cx - kappa

        compl = float(xl @ sl) + sum(xv @ sv for xv, sv in zip(x_svecs, s_svecs))
        mu = (compl + tau * kappa) / (nu + 1)
        if mu0 is None:
            mu0 = mu

        pres = float(np.max(np.abs(a_apply(xf, xl, x_svecs) / tau - b))) / b_norm if m else 0.0
        dual_stack = []
        if nf:
            dual_stack.append(-(Af.T @ y) / tau + chf)
        if nl:
            dual_stack.append(-(Al.T @ y) / tau + chl - sl / tau)
        for mat, cv, sv in zip(Ap, chp, s_svecs):
            dual_stack.append(-(mat.T @ y) / tau + cv - sv / tau)
        dres = (
            float(np.max(np.abs(np.concatenate(dual_stack)))) / c_norm
            if dual_stack
            else 0.0
        )
        pobj = cx / tau
        dobj = float(b @ y) / tau
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        trace.append((it, pobj, dobj, mu, pres, dres))

        if pres <= cfg.tolerance and dres <= cfg.tolerance and gap <= cfg.tolerance:
            return finish(
                Status.OPTIMAL,
                -pobj,
                res={"primal": pres, "dual": dres, "gap": gap},
                it=it,
            )

        diverging = kappa > 10.0 * tau and mu < 1e-2 * mu0
        if diverging or mu < 1e-10 * mu0:
            found = try_infeasibility_certificates()
            if found is not None:
                kind, ray = found
                if kind == "infeasible":
                    return finish(
                        Status.INFEASIBLE,
                        float("-inf"),
                        message="verified Farkas ray",
                        ray=ray,
                        res={"certificate_violation": ray["violation"]},
                        it=it,
                    )
                return finish(
                    Status.UNBOUNDED,
                    float("inf"),
                    message="verified improving ray",
                    ray=ray,
                    res={"certificate_violation": ray["violation"]},
                    it=it,
                )
        if tau < cfg.infeasibility_threshold * max(1.0, kappa):
            return finish(
                Status.NUMERICAL_TROUBLE,
                float("nan"),
                message="embedding collapsed without a verifiable certificate",
                res={"primal": pres, "dual": dres, "gap": gap},
                it=it,
            )
        # Residuals shrink in proportion to the complementarity along the
        # embedding; once mu has overshot the target by four orders with
        # the residuals still out, they are pinned at a roundoff floor.
        if mu < 1e-4 * cfg.tolerance * mu0 and max(pres, dres) > cfg.tolerance:
            return finish(
                Status.NUMERICAL_TROUBLE,
                float("nan"),
                message=(
                    "complementarity collapsed ahead of feasibility "
                    f"(primal {pres:.2e}, dual {dres:.2e})"
                ),
                res={"primal": pres, "dual": dres, "gap": gap},
                it=it,
            )
        # Stagnation deep in the endgame: residuals stuck over a long window
        # mean the double-precision accuracy floor was reached.
        if len(trace) >= 10 and mu < 1e-8 * mu0:
            w0 = trace[-10]
            if (
                w0[3] / max(mu, 1e-300) < 1.2
                and max(pres, dres) > max(w0[4], w0[5]) / 1.2
            ) or mu < 1e-22 * max(1.0, mu0):
                return finish(
                    Status.NUMERICAL_TROUBLE,
                    float("nan"),
                    message=(
                        "stagnated before reaching tolerance "
                        f"(primal {pres:.2e}, dual {dres:.2e}, gap {gap:.2e})"
                    ),
                    res={"primal": pres, "dual": dres, "gap": gap},
                    it=it,
                )

        # ---- scaling data -------------------------------------------------
        hinv_l = xl / sl if nl else np.zeros(0)
        Ws = [_nt_scaling(X, S) for X, S in zip(Xs, Ss)]
        scaling_bad = any(
            not np.all(np.isfinite(W)) or float(np.max(np.abs(W))) > 1e120
            for W in Ws
        ) or (nl and float(np.max(hinv_l)) > 1e120)
        if scaling_bad:
            return finish(
                Status.NUMERICAL_TROUBLE,
                float("nan"),
                message="conic scaling overflowed double precision",
                res={"primal": pres, "dual": dres, "gap": gap},
                it=it,
            )
        Xinv_svecs = []
        for X in Xs:
            dx_, ux_ = np.linalg.eigh(_sym(X))
            dx_ = np.clip(dx_, 1e-300, None)
            Xinv_svecs.append(svec((ux_ / dx_) @ ux_.T))

        def hinv_psd(j, v):
            return svec(Ws[j] @ smat(v, dims[j]) @ Ws[j])

        # ---- reduced Newton matrix ---------------------------------------
        M = np.zeros((m, m))
        if nl:
            M += (Al * hinv_l) @ Al.T
        for j, mat in enumerate(Ap):
            scaled = np.empty_like(mat)
            for r in range(m):
                scaled[r] = hinv_psd(j, mat[r])
            M += scaled @ mat.T

        hc_l = hinv_l * chl if nl else np.zeros(0)
        hc_p = [hinv_psd(j, chp[j]) for j in range(nblk)]
        Ahc = a_apply(np.zeros(nf), hc_l, hc_p)
        c_dot_hc = float(chl @ hc_l) + sum(float(chp[j] @ hc_p[j]) for j in range(nblk))

        dim_red = m + nf + 1
        K = np.zeros((dim_red, dim_red))
        K[:m, :m] = M
        if nf:
            K[:m, m : m + nf] = Af
            K[m : m + nf, :m] = -Af.T
            K[m : m + nf, -1] = chf
            K[-1, m : m + nf] = -chf
        K[:m, -1] = -Ahc - b
        K[-1, :m] = b - Ahc
        K[-1, -1] = kappa / tau + c_dot_hc

        factor = None
        for attempt in range(2):
            try:
                factor = _KKTFactor(K)
                break
            except (np.linalg.LinAlgError, ValueError):
                if attempt == 0:
                    K = K + 1e-12 * (1.0 + np.max(np.abs(np.diag(K)))) * np.eye(dim_red)
                else:
                    return finish(
                        Status.NUMERICAL_TROUBLE,
                        float("nan"),
                        message="Newton system factorization failed after jitter retry",
                        res={"primal": pres, "dual": dres, "gap": gap},
                        it=it,
                    )

        def solve_structured(r1, r2f, r2l, r2p, r3, u4l, u4p, r5):
            """Direction for the full Newton system with general right side.

            Equations: A dx - b dtau = r1; -A'dy + c dtau - ds = r2 (free
            rows carry no ds); b'dy - c'dx - dkappa = r3; the linearized
            complementarity in inverse-scaling form dx + Hinv ds = u4 on
            the conic blocks; kappa dtau + tau dkappa = r5.  Using Hinv
            (the only scaling operator applied anywhere) keeps the solve
            and its residual check numerically consistent.
            """
            hw_l = u4l + hinv_l * r2l if nl else np.zeros(0)
            hw_p = [u4p[j] + hinv_psd(j, r2p[j]) for j in range(nblk)]
            rhs = np.empty(dim_red)
            rhs[:m] = r1 - a_apply(np.zeros(nf), hw_l, hw_p)
            if nf:
                rhs[m : m + nf] = r2f
            rhs[-1] = (
                r3
                + r5 / tau
                + float(chl @ hw_l)
                + sum(float(chp[j] @ hw_p[j]) for j in range(nblk))
            )
            sol = factor.solve(rhs)
            dy = sol[:m]
            dxf = sol[m : m + nf]
            dtau = float(sol[-1])
            ds_l = (-(Al.T @ dy) + chl * dtau - r2l) if nl else np.zeros(0)
            ds_p = [-(Ap[j].T @ dy) + chp[j] * dtau - r2p[j] for j in range(nblk)]
            dx_l = (
                hw_l + hinv_l * (Al.T @ dy) - hc_l * dtau if nl else np.zeros(0)
            )
            dx_p = [
                hw_p[j] + hinv_psd(j, Ap[j].T @ dy) - hc_p[j] * dtau
                for j in range(nblk)
            ]
            dkappa = (r5 - kappa * dtau) / tau
            return {
                "y": dy,
                "xf": dxf,
                "tau": dtau,
                "kappa": dkappa,
                "xl": dx_l,
                "sl": ds_l,
                "Xp": dx_p,
                "Sp": ds_p,
            }

        def full_residual(D, r1, r2f, r3, u4l, u4p, r5):
            # The dual equations hold exactly by construction of ds; the
            # remaining equations measure the elimination/back-substitution
            # error that drives the refinement.
            rho1 = r1 - (a_apply(D["xf"], D["xl"], D["Xp"]) - b * D["tau"])
            rho2f = (
                r2f - (-(Af.T @ D["y"]) + chf * D["tau"]) if nf else np.zeros(0)
            )
            cdx = float(
                chf @ D["xf"]
                + (chl @ D["xl"] if nl else 0.0)
                + sum(chp[j] @ D["Xp"][j] for j in range(nblk))
            )
            rho3 = r3 - (float(b @ D["y"]) - cdx - D["kappa"])
            rho4l = (
                u4l - (D["xl"] + hinv_l * D["sl"]) if nl else np.zeros(0)
            )
            rho4p = [
                u4p[j] - (D["Xp"][j] + hinv_psd(j, D["Sp"][j]))
                for j in range(nblk)
            ]
            rho5 = r5 - (kappa * D["tau"] + tau * D["kappa"])
            return rho1, rho2f, rho3, rho4l, rho4p, rho5

        def _worst_of(rho):
            return max(
                float(np.max(np.abs(rho[0]))) if m else 0.0,
                float(np.max(np.abs(rho[1]))) if nf else 0.0,
                abs(rho[2]),
                float(np.max(np.abs(rho[3]))) if nl else 0.0,
                max((float(np.max(np.abs(v))) for v in rho[4]), default=0.0),
                abs(rho[5]),
            )

        zeros_l = np.zeros(nl)
        zeros_p = [np.zeros(mat.shape[1]) for mat in Ap]
        aug_state: dict = {}

        def augmented_factor():
            """Factor the KKT system with the PSD directions kept explicit.

            The reduced normal equations square the conditioning of the PSD
            scaling; when their directions degrade, the (larger but better
            behaved) augmented system is solved instead.
            """
            if "factor" not in aug_state:
                sizes = [mat.shape[1] for mat in Ap]
                offsets = []
                pos = m + nf
                for size in sizes:
                    offsets.append(pos)
                    pos += size
                dim = pos + 1
                G_mats = []
                for j, size in enumerate(sizes):
                    G = np.empty((size, size))
                    for i in range(size):
                        e = np.zeros(size)
                        e[i] = 1.0
                        G[:, i] = hinv_psd(j, e)
                    G_mats.append(G)
                Ka = np.zeros((dim, dim))
                Ka[:m, :m] = (Al * hinv_l) @ Al.T if nl else 0.0
                if nf:
                    Ka[:m, m : m + nf] = Af
                    Ka[m : m + nf, :m] = -Af.T
                    Ka[m : m + nf, -1] = chf
                    Ka[-1, m : m + nf] = -chf
                Ahc_l = Al @ hc_l if nl else np.zeros(m)
                Ka[:m, -1] = -Ahc_l - b
                Ka[-1, :m] = b - Ahc_l
                Ka[-1, -1] = kappa / tau + (float(chl @ hc_l) if nl else 0.0)
                for j, off in enumerate(offsets):
                    size = sizes[j]
                    Ka[:m, off : off + size] = Ap[j]
                    Ka[off : off + size, :m] = -(G_mats[j] @ Ap[j].T)
                    Ka[off : off + size, off : off + size] = np.eye(size)
                    Ka[off : off + size, -1] = G_mats[j] @ chp[j]
                    Ka[-1, off : off + size] = -chp[j]
                aug_state["factor"] = _KKTFactor(Ka)
                aug_state["offsets"] = offsets
                aug_state["G"] = G_mats
            return aug_state["factor"], aug_state["offsets"], aug_state["G"]

        def solve_augmented(r1, r2f, r2l, r2p, r3, u4l, u4p, r5):
            afac, offsets, G_mats = augmented_factor()
            hw_l = u4l + hinv_l * r2l if nl else np.zeros(0)
            dim = afac.K.shape[0]
            rhs = np.zeros(dim)
            rhs[:m] = r1 - (Al @ hw_l if nl else 0.0)
            if nf:
                rhs[m : m + nf] = r2f
            for j, off in enumerate(offsets):
                rhs[off : off + len(u4p[j])] = u4p[j] + G_mats[j] @ r2p[j]
            rhs[-1] = r3 + r5 / tau + (float(chl @ hw_l) if nl else 0.0)
            sol = afac.solve(rhs)
            dy = sol[:m]
            dxf = sol[m : m + nf]
            dtau = float(sol[-1])
            dx_p = [
                sol[off : off + Ap[j].shape[1]] for j, off in enumerate(offsets)
            ]
            ds_l = (-(Al.T @ dy) + chl * dtau - r2l) if nl else np.zeros(0)
            ds_p = [-(Ap[j].T @ dy) + chp[j] * dtau - r2p[j] for j in range(nblk)]
            dx_l = (
                hw_l + hinv_l * (Al.T @ dy) - hc_l * dtau if nl else np.zeros(0)
            )
            dkappa = (r5 - kappa * dtau) / tau
            return {
                "y": dy,
                "xf": dxf,
                "tau": dtau,
                "kappa": dkappa,
                "xl": dx_l,
                "sl": ds_l,
                "Xp": dx_p,
                "Sp": ds_p,
            }

        def newton(sigma, eta, corr_l, corr_tk):
            r1 = -eta * rp
            r2f = -eta * rd_f if nf else np.zeros(0)
            r2l = -eta * rd_l if nl else np.zeros(0)
            r2p = [-eta * rd_p[j] for j in range(nblk)]
            r3 = -eta * rg
            r4l = (sigma * mu - corr_l) / xl - sl if nl else np.zeros(0)
            r4p = [sigma * mu * Xinv_svecs[j] - s_svecs[j] for j in range(nblk)]
            r5 = sigma * mu - tau * kappa - corr_tk
            u4l = hinv_l * r4l if nl else np.zeros(0)
            u4p = [hinv_psd(j, r4p[j]) for j in range(nblk)]
            rhs_scale = max(
                1.0,
                float(np.max(np.abs(r1))) if m else 0.0,
                float(np.max(np.abs(u4l))) if nl else 0.0,
                max((float(np.max(np.abs(v))) for v in u4p), default=0.0),
                abs(r5),
            )

            def attempt(solve_fn):
                # Safeguarded refinement on the full system:
                # back-substitution through the conic scaling amplifies
                # solve error by 1/mu, so polishing on the full equations
                # is what keeps the primal residual shrinking with mu.
                try:
                    D = solve_fn(r1, r2f, r2l, r2p, r3, u4l, u4p, r5)
                    rho = full_residual(D, r1, r2f, r3, u4l, u4p, r5)
                    worst = _worst_of(rho)
                    for _ in range(3):
                        if worst <= 1e-11 * rhs_scale or not np.isfinite(worst):
                            break
                        C = solve_fn(
                            rho[0], rho[1], zeros_l, zeros_p,
                            rho[2], rho[3], rho[4], rho[5],
                        )
                        trial = {
                            key: [a + b_ for a, b_ in zip(D[key], C[key])]
                            if isinstance(D[key], list)
                            else D[key] + C[key]
                            for key in D
                        }
                        rho_t = full_residual(trial, r1, r2f, r3, u4l, u4p, r5)
                        worst_t = _worst_of(rho_t)
                        if not worst_t < worst:
                            break
                        D, rho, worst = trial, rho_t, worst_t
                    return D, worst
                except (ValueError, np.linalg.LinAlgError):
                    return None, np.inf

            D, worst = attempt(solve_structured)
            if nblk and (not np.isfinite(worst) or worst > 1e-9 * rhs_scale):
                D_aug, worst_aug = attempt(solve_augmented)
                if D_aug is not None and worst_aug < worst:
                    D, worst = D_aug, worst_aug
            if D is None:
                raise _NewtonFailure("Newton system solve produced no usable direction")
            finite = all(
                np.all(np.isfinite(v)) if not isinstance(v, list)
                else all(np.all(np.isfinite(u)) for u in v)
                for v in D.values()
            )
            # Moderately inaccurate directions are still safe: the ratio
            # test keeps the iterate interior and stagnation detection
            # catches dead ends.  Only directions that are dominated by
            # error are rejected.
            if not finite or worst > 5e-2 * rhs_scale:
                raise _NewtonFailure(
                    f"Newton system numerically singular (relative residual {worst / rhs_scale:.2e})"
                )
            return D

        def boundary(dirn):
            alpha = min(
                _vec_step_bound(xl, dirn["xl"]) if nl else np.inf,
                _vec_step_bound(sl, dirn["sl"]) if nl else np.inf,
                -tau / dirn["tau"] if dirn["tau"] < 0 else np.inf,
                -kappa / dirn["kappa"] if dirn["kappa"] < 0 else np.inf,
            )
            for j in range(nblk):
                alpha = min(alpha, _psd_step_bound(Xs[j], smat(dirn["Xp"][j], dims[j])))
                alpha = min(alpha, _psd_step_bound(Ss[j], smat(dirn["Sp"][j], dims[j])))
            return alpha

        try:
            if cfg.predictor_corrector:
                aff = newton(0.0, 1.0, np.zeros(nl) if nl else 0.0, 0.0)
                a_aff = min(1.0, boundary(aff))
                compl_aff = 0.0
                if nl:
                    compl_aff += float(
                        (xl + a_aff * aff["xl"]) @ (sl + a_aff * aff["sl"])
                    )
                for j in range(nblk):
                    compl_aff += float(
                        (x_svecs[j] + a_aff * aff["Xp"][j])
                        @ (s_svecs[j] + a_aff * aff["Sp"][j])
                    )
                compl_aff += (tau + a_aff * aff["tau"]) * (kappa + a_aff * aff["kappa"])
                mu_aff = compl_aff / (nu + 1)
                # Capped below 1: a full-centering step would freeze both
                # the residuals (eta -> 0) and the complementarity.
                sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 1e-8, 0.9))
                corr_l = aff["xl"] * aff["sl"] if nl else 0.0
                corr_tk = aff["tau"] * aff["kappa"]
                dirn = newton(sigma, 1.0 - sigma, corr_l, corr_tk)
            else:
                sigma = 0.2
                dirn = newton(sigma, 1.0 - sigma, np.zeros(nl) if nl else 0.0, 0.0)
        except _NewtonFailure as exc:
            return finish(
                Status.NUMERICAL_TROUBLE,
                float("nan"),
                message=str(exc),
                res={"primal": pres, "dual": dres, "gap": gap},
                it=it,
            )

        alpha = min(1.0, cfg.step_fraction * boundary(dirn))
        if alpha < 1e-11:
            stall += 1
            if stall >= 3:
                return finish(
                    Status.NUMERICAL_TROUBLE,
                    float("nan"),
                    message="step length collapsed",
                    res={"primal": pres, "dual": dres, "gap": gap},
                    it=it,
                )
        else:
            stall = 0

        xf = xf + alpha * dirn["xf"]
        if nl:
            xl = xl + alpha * dirn["xl"]
            sl = sl + alpha * dirn["sl"]
        for j in range(nblk):
            Xs[j] = _sym(Xs[j] + alpha * smat(dirn["Xp"][j], dims[j]))
            Ss[j] = _sym(Ss[j] + alpha * smat(dirn["Sp"][j], dims[j]))
        y = y + alpha * dirn["y"]
        tau += alpha * dirn["tau"]
        kappa += alpha * dirn["kappa"]

    # Iteration budget exhausted: report the scaled iterate as-is.
    x_svecs = [svec(X) for X in Xs]
    cx = float(chf @ xf + chl @ xl + sum(cv @ xv for cv, xv in zip(chp, x_svecs)))
    return finish(
        Status.ITERATION_LIMIT,
        -cx / max(tau, 1e-300),
        message="iteration limit reached",
        res={},
        it=cfg.max_iterations,
    )
