"""Reference solver on an independent code path.

Solves the stacked (non-condensed) program with cvxopt's cone QP solver
and then polishes the result by re-solving the equality-constrained KKT
system on the detected active set. The polish removes the interior-point
smearing, giving reference solutions good to near machine precision for
cross-checking the fast backends. Intended for tests and spot checks,
not for the control loop, hence the size guard.
"""

from __future__ import annotations

import time

import numpy as np
from cvxopt import matrix, solvers, spmatrix

from .data import BoundDuals, QpSolution, StructuredQp, finalize_solution

MAX_REFERENCE_VARIABLES = 6000

_TIGHT_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-11,
    "reltol": 1e-11,
    "feastol": 1e-11,
    "maxiters": 200,
}


def _stacked_matrices(qp: StructuredQp):
    """Stack w = (x_0..x_N, u_0..u_{N-1}) into P, q, equalities and bound rows."""
    N, n, m = qp.N, qp.n, qp.m
    nx = (N + 1) * n
    nw = nx + N * m

    P = np.zeros((nw, nw))
    qv = np.zeros(nw)
    for k in range(N + 1):
        P[k * n:(k + 1) * n, k * n:(k + 1) * n] = 2.0 * qp.Q[k]
        qv[k * n:(k + 1) * n] = qp.q[k]
    for k in range(N):
        iu = nx + k * m
        P[iu:iu + m, iu:iu + m] = 2.0 * qp.R[k]
        P[iu:iu + m, k * n:(k + 1) * n] = 2.0 * qp.S[k]
        P[k * n:(k + 1) * n, iu:iu + m] = 2.0 * qp.S[k].T
        qv[iu:iu + m] = qp.r[k]

    neq = (N + 1) * n
    Aeq = np.zeros((neq, nw))
    beq = np.zeros(neq)
    Aeq[:n, :n] = np.eye(n)
    beq[:n] = qp.x0
    for k in range(N):
        rows = slice((k + 1) * n, (k + 2) * n)
        Aeq[rows, (k + 1) * n:(k + 2) * n] = np.eye(n)
        Aeq[rows, k * n:(k + 1) * n] = -qp.A[k]
        iu = nx + k * m
        Aeq[rows, iu:iu + m] = -qp.B[k]
        beq[rows] = qp.g[k]

    # one inequality row per finite bound: +w <= ub, -w <= -lb
    rows = []
    rhs = []
    kinds = []   # (which, stage, coord) for mapping duals back
    for k in range(1, N + 1):
        for i in range(n):
            if np.isfinite(qp.x_ub[k, i]):
                rows.append((1.0, k * n + i))
                rhs.append(qp.x_ub[k, i])
                kinds.append(("x_hi", k, i))
            if np.isfinite(qp.x_lb[k, i]):
                rows.append((-1.0, k * n + i))
                rhs.append(-qp.x_lb[k, i])
                kinds.append(("x_lo", k, i))
    for k in range(N):
        for i in range(m):
            col = nx + k * m + i
            if np.isfinite(qp.u_ub[k, i]):
                rows.append((1.0, col))
                rhs.append(qp.u_ub[k, i])
                kinds.append(("u_hi", k, i))
            if np.isfinite(qp.u_lb[k, i]):
                rows.append((-1.0, col))
                rhs.append(-qp.u_lb[k, i])
                kinds.append(("u_lo", k, i))
    Gin = np.zeros((len(rows), nw))
    for j, (sgn, col) in enumerate(rows):
        Gin[j, col] = sgn
    return P, qv, Aeq, beq, Gin, np.array(rhs, dtype=float), kinds


def _polish(P, qv, Aeq, beq, Gin, hin, w, z):
    """Active-set re-solve; returns (w, z) or None when the guess fails."""
    if Gin.shape[0]:
        slack = hin - Gin @ w
        scale = 1.0 + np.abs(hin)
        active = (slack < 1e-7 * scale) | (z > 1e-7 * (1.0 + np.abs(z).max()))
    else:
        active = np.zeros(0, dtype=bool)
    Ga = Gin[active]
    neq, nact = Aeq.shape[0], Ga.shape[0]
    nw = P.shape[0]

    K = np.zeros((nw + neq + nact, nw + neq + nact))
    K[:nw, :nw] = P
    K[:nw, nw:nw + neq] = Aeq.T
    K[nw:nw + neq, :nw] = Aeq
    K[:nw, nw + neq:] = Ga.T
    K[nw + neq:, :nw] = Ga
    r = np.concatenate([-qv, beq, hin[active]])
    sol, *_ = np.linalg.lstsq(K, r, rcond=None)
    wp = sol[:nw]
    zp_act = sol[nw + neq:]

    # accept only a verified KKT point
    if np.abs(Aeq @ wp - beq).max(initial=0.0) > 1e-9:
        return None
    if Gin.shape[0] and (Gin @ wp - hin).max(initial=0.0) > 1e-9 * np.abs(hin).max(initial=1.0):
        return None
    if nact and zp_act.min(initial=0.0) < -1e-8:
        return None
    stat = P @ wp + qv + Aeq.T @ sol[nw:nw + neq] + Ga.T @ zp_act
    if np.abs(stat).max(initial=0.0) > 1e-7 * (1.0 + np.abs(qv).max()):
        return None
    zp = np.zeros_like(z)
    zp[active] = np.maximum(zp_act, 0.0)
    return wp, zp


def solve_reference(qp: StructuredQp, polish: bool = True) -> QpSolution:
    """High-accuracy reference solve of a :class:`StructuredQp`.

    Independent of the Riccati and condensed code paths. Raises
    ``ValueError`` for instances beyond ``MAX_REFERENCE_VARIABLES``
    stacked variables.
    """
    t0 = time.perf_counter()
    N, n, m = qp.N, qp.n, qp.m
    nw = (N + 1) * n + N * m
    if nw > MAX_REFERENCE_VARIABLES:
        raise ValueError(
            f"reference solver limited to {MAX_REFERENCE_VARIABLES} stacked "
            f"variables, got {nw}")

    fx = np.isfinite(qp.x_lb[1:]) & np.isfinite(qp.x_ub[1:])
    fu = np.isfinite(qp.u_lb) & np.isfinite(qp.u_ub)
    if np.any((qp.x_lb[1:] > qp.x_ub[1:]) & fx) or np.any((qp.u_lb > qp.u_ub) & fu):
        us = np.zeros((N, m))
        return finalize_solution(qp, qp.rollout(us), us,
                                 BoundDuals.zeros(N, n, m), 0,
                                 time.perf_counter() - t0, "infeasible")

    P, qv, Aeq, beq, Gin, hin, kinds = _stacked_matrices(qp)

    def sp(Mat):
        r, c = np.nonzero(Mat)
        return spmatrix(Mat[r, c], r.tolist(), c.tolist(), Mat.shape)

    saved = dict(solvers.options)
    solvers.options.update(_TIGHT_OPTIONS)
    try:
        if Gin.shape[0]:
            sol = solvers.qp(sp(P), matrix(qv), sp(Gin), matrix(hin),
                             sp(Aeq), matrix(beq))
        else:
            sol = solvers.qp(sp(P), matrix(qv),
                             spmatrix([], [], [], (0, nw)), matrix(np.zeros(0)),
                             sp(Aeq), matrix(beq))
    finally:
        solvers.options.clear()
        solvers.options.update(saved)

    status = sol["status"]
    if sol["x"] is None:
        us = np.zeros((N, m))
        hint = "infeasible" if "infeasible" in status else "max_iter"
        return finalize_solution(qp, qp.rollout(us), us,
                                 BoundDuals.zeros(N, n, m),
                                 int(sol.get("iterations", 0)),
                                 time.perf_counter() - t0, hint)

    w = np.array(sol["x"]).ravel()
    z = np.array(sol["z"]).ravel() if Gin.shape[0] else np.zeros(0)

    if polish and status == "optimal":
        polished = _polish(P, qv, Aeq, beq, Gin, hin, w, z)
        if polished is not None:
            w, z = polished

    nx = (N + 1) * n
    xs = w[:nx].reshape(N + 1, n)
    us = w[nx:].reshape(N, m)
    duals = BoundDuals.zeros(N, n, m)
    for zj, (which, k, i) in zip(z, kinds):
        getattr(duals, which)[k, i] = zj

    hint = "infeasible" if "infeasible" in status else "max_iter"
    return finalize_solution(qp, xs, us, duals,
                             int(sol.get("iterations", 0)),
                             time.perf_counter() - t0, hint)
