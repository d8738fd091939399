"""Condensed backend: eliminate the states, solve a dense bound/row QP.

States are substituted by their affine dependence on the stacked input
vector U, so the equality constraints disappear and the state bounds
become general two-sided rows. The resulting dense program is solved by
the same Mehrotra predictor-corrector scheme as the structured backend,
here with a Cholesky factorization of the reduced normal matrix. Cost
per iteration grows cubically with the horizon length, which is the
point of keeping this backend around for comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import BoundDuals, QpSolution, StructuredQp, finalize_solution
from .structured import DEFAULT_SETTINGS, IpmSettings


@dataclass
class DenseQp:
    """Condensed program over the stacked input vector U.

    The objective is 0.5 * U'HU + h'U + const; note the explicit half,
    unlike the weight-literal stage costs of :class:`StructuredQp`.
    Bounds on U come from the input bounds, the rows g_lo <= G U <= g_up
    from the state bounds of stages 1..N and the terminal stage.
    """

    H: np.ndarray
    h: np.ndarray
    const: float
    u_lb: np.ndarray
    u_ub: np.ndarray
    G: np.ndarray
    g_lo: np.ndarray
    g_up: np.ndarray
    row_stage: np.ndarray   # stage index of each row
    row_coord: np.ndarray   # state component of each row
    x_free: np.ndarray      # zero-input state trajectory, (N+1, n)
    Gam: np.ndarray         # input-to-state map, (N+1, n, N*m)
    N: int
    n: int
    m: int

    def num_variables(self) -> int:
        return self.N * self.m

    def expand(self, U: np.ndarray):
        """Recover (states, inputs) from a stacked input vector."""
        xs = self.x_free + self.Gam @ U
        return xs, U.reshape(self.N, self.m)


def condense(qp: StructuredQp) -> DenseQp:
    """Fold the dynamics of a :class:`StructuredQp` into a :class:`DenseQp`."""
    N, n, m = qp.N, qp.n, qp.m
    nv = N * m
    Gam = np.zeros((N + 1, n, nv))
    x_free = np.zeros((N + 1, n))
    x_free[0] = qp.x0
    for k in range(N):
        Gam[k + 1] = qp.A[k] @ Gam[k]
        Gam[k + 1][:, k * m:(k + 1) * m] += qp.B[k]
        x_free[k + 1] = qp.A[k] @ x_free[k] + qp.g[k]

    Gflat = Gam.reshape((N + 1) * n, nv)
    H = 2.0 * (Gflat.T @ np.matmul(qp.Q, Gam).reshape((N + 1) * n, nv))
    SG = np.matmul(qp.S, Gam[:N])   # (N, m, nv); stage-k block columns are zero
    Hc = np.zeros((nv, nv))
    for k in range(N):
        Hc[k * m:(k + 1) * m, :] = 2.0 * SG[k]
        H[k * m:(k + 1) * m, k * m:(k + 1) * m] += 2.0 * qp.R[k]
    H += Hc + Hc.T
    H = 0.5 * (H + H.T)

    gx_lin = 2.0 * np.einsum('kij,kj->ki', qp.Q, x_free) + qp.q
    h = Gflat.T @ gx_lin.reshape(-1)
    h += (qp.r + 2.0 * np.einsum('kij,kj->ki', qp.S, x_free[:N])).reshape(-1)
    const = float(np.einsum('ki,kij,kj->', x_free, qp.Q, x_free)
                  + np.einsum('ki,ki->', qp.q, x_free))

    finite = np.isfinite(qp.x_lb) | np.isfinite(qp.x_ub)
    finite[0] = False   # x_0 is fixed data, not a decision
    ks, cs = np.nonzero(finite)
    G = Gam[ks, cs, :]
    g_lo = qp.x_lb[ks, cs] - x_free[ks, cs]
    g_up = qp.x_ub[ks, cs] - x_free[ks, cs]

    return DenseQp(H=H, h=h, const=const,
                   u_lb=qp.u_lb.reshape(-1).copy(),
                   u_ub=qp.u_ub.reshape(-1).copy(),
                   G=G, g_lo=g_lo, g_up=g_up,
                   row_stage=ks, row_coord=cs,
                   x_free=x_free, Gam=Gam, N=N, n=n, m=m)


def _peak(a: np.ndarray) -> float:
    return float(np.max(a, initial=0.0))


def solve_dense(dense: DenseQp,
                settings: Optional[IpmSettings] = None,
                warm_start: Optional[np.ndarray] = None):
    """Interior-point solve of a :class:`DenseQp`.

    Returns ``(U, z_box_lo, z_box_hi, z_row_lo, z_row_hi, iters,
    converged)`` where the z vectors are full-length multiplier vectors
    (zeros at absent bounds).
    """
    st = settings or DEFAULT_SETTINGS
    H, h, G = dense.H, dense.h, dense.G
    lb, ub, glo, gup = dense.u_lb, dense.u_ub, dense.g_lo, dense.g_up
    nv = H.shape[0]
    p = G.shape[0]

    ibl = np.nonzero(np.isfinite(lb))[0]
    ibh = np.nonzero(np.isfinite(ub))[0]
    irl = np.nonzero(np.isfinite(glo))[0]
    irh = np.nonzero(np.isfinite(gup))[0]
    n_c = ibl.size + ibh.size + irl.size + irh.size

    U = np.zeros(nv) if warm_start is None else np.array(warm_start, dtype=float)
    if U.shape != (nv,):
        raise ValueError("warm start has the wrong shape")

    span_b = np.where(np.isfinite(lb) & np.isfinite(ub), ub - lb, 1.0)
    span_r = np.where(np.isfinite(glo) & np.isfinite(gup), gup - glo, 1.0)
    floor_b = np.maximum(1e-3 * span_b, 1e-12)
    floor_r = np.maximum(1e-3 * span_r, 1e-12)

    def constraint_values(Uv):
        GU = G @ Uv
        return (Uv[ibl] - lb[ibl], ub[ibh] - Uv[ibh],
                GU[irl] - glo[irl], gup[irh] - GU[irh])

    cons = constraint_values(U)
    slacks = [np.maximum(c, f) for c, f in
              zip(cons, (floor_b[ibl], floor_b[ibh], floor_r[irl], floor_r[irh]))]
    zs = [np.maximum(1e-2 / s, 1e-6) for s in slacks]

    converged = False
    iters = 0
    best = np.inf
    flat = 0
    endgame = 0

    for it in range(st.max_iter):
        iters = it
        cons = constraint_values(U)
        viol = max(_peak(-c) for c in cons) if n_c else 0.0
        r_p = max((_peak(np.abs(c - s)) for c, s in zip(cons, slacks)),
                  default=0.0) if n_c else 0.0
        compl = max((_peak(np.abs(z * c)) for z, c in zip(zs, cons)),
                    default=0.0) if n_c else 0.0
        mu = sum(float(s @ z) for s, z in zip(slacks, zs)) / n_c if n_c else 0.0

        zrow = np.zeros(p)
        zrow[irl] += zs[2]
        zrow[irh] -= zs[3]
        r_d = H @ U + h - G.T @ zrow
        r_d[ibl] -= zs[0]
        r_d[ibh] += zs[1]
        stat = _peak(np.abs(r_d))

        if viol <= 0.3 * st.tol_feas and r_p <= st.tol_feas \
                and stat <= 0.3 * st.tol_kkt and compl <= 0.3 * st.tol_kkt:
            converged = True
            break
        # diverging multipliers (infeasible instance): stop before the
        # barrier divisions overflow and report the last iterate
        zmax = max((_peak(z) for z in zs), default=0.0)
        smin = min((float(np.min(s)) for s in slacks if s.size), default=1.0)
        if not np.isfinite(mu) or zmax > 1e140 or smin < 1e-140:
            break
        # same progress bookkeeping as the structured kernel
        metric = max(viol, r_p, stat, compl)
        if metric < 0.999 * best:
            best = metric
            flat = 0
            endgame = 0
        else:
            flat += 1
            if mu <= 1e-16:
                endgame += 1
            if flat >= 30 or endgame >= 6:
                break

        # near-active barrier ratios can push cond(Hbar) past what the
        # factorization tolerates; cap them (escalating downward until it
        # factors) and use the same capped ratios in the dual recovery so
        # the step stays the exact Newton direction of the capped system
        rats = [z / s for z, s in zip(zs, slacks)]
        cap = np.inf
        fac = None
        while cap >= 1.0:
            if np.isfinite(cap):
                rats = [np.minimum(rt, cap) for rt in rats]
            d_box = np.zeros(nv)
            d_box[ibl] += rats[0]
            d_box[ibh] += rats[1]
            d_row = np.zeros(p)
            d_row[irl] += rats[2]
            d_row[irh] += rats[3]
            Hbar = H + np.diag(d_box) + G.T @ (d_row[:, None] * G)
            try:
                fac = cho_factor(Hbar, lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                nxt = 1e15 * max(1.0, float(np.abs(np.diag(H)).max()))
                cap = nxt if not np.isfinite(cap) else 1e-2 * cap
        if fac is None:
            break

        r_ps = [c - s for c, s in zip(cons, slacks)]
        grad = H @ U + h
        zero = [np.zeros_like(s) for s in slacks]

        def direction(sigma_mu, corrs):
            vs = [(sigma_mu - corr) / s - rt * rp
                  for s, rt, rp, corr in zip(slacks, rats, r_ps, corrs)]
            b = -grad.copy()
            b[ibl] += vs[0]
            b[ibh] -= vs[1]
            vrow = np.zeros(p)
            vrow[irl] += vs[2]
            vrow[irh] -= vs[3]
            b += G.T @ vrow
            dU = cho_solve(fac, b)
            # one refinement pass; cond(Hbar) approaches 1/eps when bounds
            # become active and the raw solve then loses the endgame digits
            dU += cho_solve(fac, b - Hbar @ dU)
            GdU = G @ dU
            dcs = (dU[ibl], -dU[ibh], GdU[irl], -GdU[irh])
            dss = [dc + rp for dc, rp in zip(dcs, r_ps)]
            dzs = [(sigma_mu - corr) / s - z - rt * ds
                   for s, z, rt, ds, corr in zip(slacks, zs, rats, dss, corrs)]
            return dU, dss, dzs

        dU, dss, dzs = direction(0.0, zero)
        a_p = a_d = 1.0
        if n_c:
            ap_aff = min(_step(s, ds, 1.0) for s, ds in zip(slacks, dss))
            ad_aff = min(_step(z, dz, 1.0) for z, dz in zip(zs, dzs))
            gap_aff = sum(float((s + ap_aff * ds) @ (z + ad_aff * dz))
                          for s, ds, z, dz in zip(slacks, dss, zs, dzs))
            mu_aff = gap_aff / n_c
            ratio = mu_aff / mu if mu > 0.0 else 0.0
            sigma_mu = ratio ** 3 * mu
            base = st.tau * min(ap_aff, ad_aff)
            corrs = [ds * dz for ds, dz in zip(dss, dzs)]

            dU, dss, dzs = direction(sigma_mu, corrs)
            a_p = min(_step(s, ds, st.tau) for s, ds in zip(slacks, dss))
            a_d = min(_step(z, dz, st.tau) for z, dz in zip(zs, dzs))
            if min(a_p, a_d) < 0.5 * base:
                # corrector blocked; keep the centering, drop the correction
                dU, dss, dzs = direction(sigma_mu, zero)
                a_p = min(_step(s, ds, st.tau) for s, ds in zip(slacks, dss))
                a_d = min(_step(z, dz, st.tau) for z, dz in zip(zs, dzs))
        if a_p < 1e-12 and a_d < 1e-12:
            break

        U = U + a_p * dU
        slacks = [s + a_p * ds for s, ds in zip(slacks, dss)]
        zs = [z + a_d * dz for z, dz in zip(zs, dzs)]
        iters = it + 1

    zbl = np.zeros(nv)
    zbh = np.zeros(nv)
    zrl = np.zeros(p)
    zrh = np.zeros(p)
    zbl[ibl] = zs[0]
    zbh[ibh] = zs[1]
    zrl[irl] = zs[2]
    zrh[irh] = zs[3]
    return U, zbl, zbh, zrl, zrh, iters, converged


def _step(w, dw, tau):
    neg = dw < 0.0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-tau * w[neg] / dw[neg])))


def solve_condensed(qp: StructuredQp,
                    settings: Optional[IpmSettings] = None,
                    warm_start=None) -> QpSolution:
    """Solve a :class:`StructuredQp` through the condensed dense backend.

    Produces the same :class:`QpSolution` contract as the structured
    solver, including duals mapped back onto the stage bounds, so the
    two backends are interchangeable.
    """
    t0 = time.perf_counter()
    N, n, m = qp.N, qp.n, qp.m

    if warm_start is None:
        U0 = None
    elif isinstance(warm_start, QpSolution):
        U0 = np.asarray(warm_start.inputs, dtype=float).reshape(-1)
    else:
        U0 = np.asarray(warm_start, dtype=float).reshape(-1)

    fx = np.isfinite(qp.x_lb[1:]) & np.isfinite(qp.x_ub[1:])
    fu = np.isfinite(qp.u_lb) & np.isfinite(qp.u_ub)
    if np.any((qp.x_lb[1:] > qp.x_ub[1:]) & fx) or np.any((qp.u_lb > qp.u_ub) & fu):
        us = np.zeros((N, m)) if U0 is None else U0.reshape(N, m)
        return finalize_solution(qp, qp.rollout(us), us,
                                 BoundDuals.zeros(N, n, m), 0,
                                 time.perf_counter() - t0, "infeasible")

    dense = condense(qp)
    U, zbl, zbh, zrl, zrh, iters, converged = solve_dense(
        dense, settings=settings, warm_start=U0)
    xs, us = dense.expand(U)

    duals = BoundDuals.zeros(N, n, m)
    duals.u_lo[:] = zbl.reshape(N, m)
    duals.u_hi[:] = zbh.reshape(N, m)
    duals.x_lo[dense.row_stage, dense.row_coord] = zrl
    duals.x_hi[dense.row_stage, dense.row_coord] = zrh

    hint = "max_iter"
    if not converged:
        mxl = np.isfinite(qp.x_lb)
        mxl[0] = False
        mxu = np.isfinite(qp.x_ub)
        mxu[0] = False
        viol = max(
            _peak(np.where(mxl, qp.x_lb - xs, -np.inf)),
            _peak(np.where(mxu, xs - qp.x_ub, -np.inf)),
            _peak(np.where(np.isfinite(qp.u_lb), qp.u_lb - us, -np.inf)),
            _peak(np.where(np.isfinite(qp.u_ub), us - qp.u_ub, -np.inf)))
        if viol > 1e-6:
            hint = "infeasible"
    return finalize_solution(qp, xs, us, duals, iters,
                             time.perf_counter() - t0, hint)
