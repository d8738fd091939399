"""Riccati-factorized primal-dual interior-point solver.

Per interior-point iteration the bound multipliers are eliminated into a
diagonal Hessian modification, the resulting equality-constrained LQR
step is solved by one backward/forward Riccati sweep, and a Mehrotra
predictor-corrector pair reuses the stage factorizations. Cost per
iteration is linear in the horizon length.

Iterates keep the dynamics exactly feasible (states are rolled out from
the inputs), so only bound feasibility and stationarity are driven to
zero. The hot loop is compiled with numba and all stage algebra is
written out elementwise: the matrices are tiny (a handful of states and
inputs), so BLAS/LAPACK dispatch overhead would dominate the actual
arithmetic. Solver calls are stateless and therefore reentrant.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .data import BoundDuals, QpSolution, StructuredQp, finalize_solution


@dataclass
class IpmSettings:
    """Interior-point settings shared by the structured and condensed backends."""

    max_iter: int = 100
    tol_feas: float = 1e-8    # bound violation / slack residual target
    tol_kkt: float = 1e-6     # stationarity and complementarity target
    tau: float = 0.995        # fraction-to-boundary factor


DEFAULT_SETTINGS = IpmSettings()

# The _group_* helpers act on one bound group: a (K, d) variable block w
# with lower/upper bounds, finite-bound masks, slacks s and multipliers z
# per side. States (xs against x bounds) and inputs (us against u bounds)
# are the two groups.


@njit(cache=True)
def _group_init(w, lb, ub, ml, mh, sl, sh, zl, zh):
    count = 0
    for k in range(w.shape[0]):
        for i in range(w.shape[1]):
            if ml[k, i]:
                span = ub[k, i] - lb[k, i] if mh[k, i] else 1.0
                floor = max(1e-3 * span, 1e-12)
                sl[k, i] = max(w[k, i] - lb[k, i], floor)
                zl[k, i] = max(1e-2 / sl[k, i], 1e-6)
                count += 1
            if mh[k, i]:
                span = ub[k, i] - lb[k, i] if ml[k, i] else 1.0
                floor = max(1e-3 * span, 1e-12)
                sh[k, i] = max(ub[k, i] - w[k, i], floor)
                zh[k, i] = max(1e-2 / sh[k, i], 1e-6)
                count += 1
    return count


@njit(cache=True)
def _group_metrics(w, lb, ub, ml, mh, sl, sh, zl, zh):
    viol = 0.0
    r_p = 0.0
    compl = 0.0
    gap = 0.0
    for k in range(w.shape[0]):
        for i in range(w.shape[1]):
            if ml[k, i]:
                c = w[k, i] - lb[k, i]
                viol = max(viol, -c)
                r_p = max(r_p, abs(c - sl[k, i]))
                compl = max(compl, abs(zl[k, i] * c))
                gap += sl[k, i] * zl[k, i]
            if mh[k, i]:
                c = ub[k, i] - w[k, i]
                viol = max(viol, -c)
                r_p = max(r_p, abs(c - sh[k, i]))
                compl = max(compl, abs(zh[k, i] * c))
                gap += sh[k, i] * zh[k, i]
    return viol, r_p, compl, gap


@njit(cache=True)
def _group_rhs(b, w, lb, ub, ml, mh, sl, sh, zl, zh, cl, ch, sigma_mu, corr):
    # b += -v_lo + v_hi with v = (sigma*mu - corr)/s - z*r_p/s; the current
    # multiplier force cancels against the dual step, so no z term appears.
    for k in range(w.shape[0]):
        for i in range(w.shape[1]):
            if ml[k, i]:
                r_p = (w[k, i] - lb[k, i]) - sl[k, i]
                cc = cl[k, i] if corr else 0.0
                b[k, i] -= (sigma_mu - cc) / sl[k, i] - zl[k, i] * r_p / sl[k, i]
            if mh[k, i]:
                r_p = (ub[k, i] - w[k, i]) - sh[k, i]
                cc = ch[k, i] if corr else 0.0
                b[k, i] += (sigma_mu - cc) / sh[k, i] - zh[k, i] * r_p / sh[k, i]


@njit(cache=True)
def _group_dirs(dw, w, lb, ub, ml, mh, sl, sh, zl, zh, cl, ch, sigma_mu, corr,
                dsl, dsh, dzl, dzh):
    for k in range(w.shape[0]):
        for i in range(w.shape[1]):
            if ml[k, i]:
                r_p = (w[k, i] - lb[k, i]) - sl[k, i]
                dsl[k, i] = dw[k, i] + r_p
                cc = cl[k, i] if corr else 0.0
                dzl[k, i] = (sigma_mu - cc - zl[k, i] * dsl[k, i]) / sl[k, i] - zl[k, i]
            if mh[k, i]:
                r_p = (ub[k, i] - w[k, i]) - sh[k, i]
                dsh[k, i] = -dw[k, i] + r_p
                cc = ch[k, i] if corr else 0.0
                dzh[k, i] = (sigma_mu - cc - zh[k, i] * dsh[k, i]) / sh[k, i] - zh[k, i]


@njit(cache=True)
def _group_alpha(ml, mh, sl, sh, zl, zh, dsl, dsh, dzl, dzh, tau):
    a_p = 1.0
    a_d = 1.0
    for k in range(ml.shape[0]):
        for i in range(ml.shape[1]):
            if ml[k, i]:
                if dsl[k, i] < 0.0:
                    a_p = min(a_p, -tau * sl[k, i] / dsl[k, i])
                if dzl[k, i] < 0.0:
                    a_d = min(a_d, -tau * zl[k, i] / dzl[k, i])
            if mh[k, i]:
                if dsh[k, i] < 0.0:
                    a_p = min(a_p, -tau * sh[k, i] / dsh[k, i])
                if dzh[k, i] < 0.0:
                    a_d = min(a_d, -tau * zh[k, i] / dzh[k, i])
    return a_p, a_d


@njit(cache=True)
def _group_gap_at(ml, mh, sl, sh, zl, zh, dsl, dsh, dzl, dzh, a_p, a_d):
    gap = 0.0
    for k in range(ml.shape[0]):
        for i in range(ml.shape[1]):
            if ml[k, i]:
                gap += (sl[k, i] + a_p * dsl[k, i]) * (zl[k, i] + a_d * dzl[k, i])
            if mh[k, i]:
                gap += (sh[k, i] + a_p * dsh[k, i]) * (zh[k, i] + a_d * dzh[k, i])
    return gap


@njit(cache=True)
def _factorize(A, B, Q2, R2, S2, mxl, mxu, mul, muu,
               sxl, sxu, sul, suu, zxl, zxu, zul, zuu, Ls, G, K):
    """Backward Riccati sweep with barrier-augmented diagonals.

    Stores the per-stage Cholesky factor of F, the coupling G and the
    feedback gain K so that the vector sweeps can reuse them. Returns
    False if a stage Hessian loses positive definiteness.
    """
    N, n, m = A.shape[0], A.shape[1], B.shape[2]
    P = np.zeros((n, n))
    PB = np.zeros((n, m))
    PA = np.zeros((n, n))
    Fk = np.zeros((m, m))
    Pn = np.zeros((n, n))

    for i in range(n):
        for j in range(n):
            P[i, j] = Q2[N, i, j]
        if mxl[N, i]:
            P[i, i] += zxl[N, i] / sxl[N, i]
        if mxu[N, i]:
            P[i, i] += zxu[N, i] / sxu[N, i]

    for k in range(N - 1, -1, -1):
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for l in range(n):
                    acc += P[i, l] * B[k, l, j]
                PB[i, j] = acc
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += P[i, l] * A[k, l, j]
                PA[i, j] = acc
        for i in range(m):
            for j in range(m):
                acc = R2[k, i, j]
                for l in range(n):
                    acc += B[k, l, i] * PB[l, j]
                Fk[i, j] = acc
        for i in range(m):
            if mul[k, i]:
                Fk[i, i] += zul[k, i] / sul[k, i]
            if muu[k, i]:
                Fk[i, i] += zuu[k, i] / suu[k, i]
        for i in range(m):
            for j in range(n):
                acc = S2[k, i, j]
                for l in range(n):
                    acc += B[k, l, i] * PA[l, j]
                G[k, i, j] = acc

        # in-place lower Cholesky of Fk into Ls[k]
        for i in range(m):
            for j in range(i + 1):
                acc = Fk[i, j]
                for l in range(j):
                    acc -= Ls[k, i, l] * Ls[k, j, l]
                if i == j:
                    if acc <= 0.0:
                        return False
                    Ls[k, i, i] = math.sqrt(acc)
                else:
                    Ls[k, i, j] = acc / Ls[k, j, j]

        # K = -F^{-1} G via the factor
        for j in range(n):
            for i in range(m):
                acc = -G[k, i, j]
                for l in range(i):
                    acc -= Ls[k, i, l] * K[k, l, j]
                K[k, i, j] = acc / Ls[k, i, i]
            for i in range(m - 1, -1, -1):
                acc = K[k, i, j]
                for l in range(i + 1, m):
                    acc -= Ls[k, l, i] * K[k, l, j]
                K[k, i, j] = acc / Ls[k, i, i]

        # P = Q2 + A'PA + G'K, symmetrized, with stage barrier diagonal
        for i in range(n):
            for j in range(n):
                acc = Q2[k, i, j]
                for l in range(n):
                    acc += A[k, l, i] * PA[l, j]
                for l in range(m):
                    acc += G[k, l, i] * K[k, l, j]
                Pn[i, j] = acc
        for i in range(n):
            for j in range(n):
                P[i, j] = 0.5 * (Pn[i, j] + Pn[j, i])
            if k > 0:
                if mxl[k, i]:
                    P[i, i] += zxl[k, i] / sxl[k, i]
                if mxu[k, i]:
                    P[i, i] += zxu[k, i] / sxu[k, i]
    return True


@njit(cache=True)
def _direction(A, B, Ls, G, K, gx, gu, bx, bu, dxs, dus,
               xs, us, xlb, xub, ulb, uub, mxl, mxu, mul, muu,
               sxl, sxu, sul, suu, zxl, zxu, zul, zuu,
               cxl, cxu, cul, cuu, sigma_mu, corr,
               dsxl, dsxu, dzxl, dzxu, dsul, dsuu, dzul, dzuu, kff, p, pn):
    """One search direction reusing the stage factorizations."""
    N, n, m = A.shape[0], A.shape[1], B.shape[2]
    bx[:, :] = 0.0
    bu[:, :] = 0.0
    _group_rhs(bx, xs, xlb, xub, mxl, mxu, sxl, sxu, zxl, zxu,
               cxl, cxu, sigma_mu, corr)
    _group_rhs(bu, us, ulb, uub, mul, muu, sul, suu, zul, zuu,
               cul, cuu, sigma_mu, corr)

    for i in range(n):
        p[i] = gx[N, i] + bx[N, i]
    for k in range(N - 1, -1, -1):
        # kff[k] = -F^{-1} (gu + bu + B'p)
        for i in range(m):
            acc = gu[k, i] + bu[k, i]
            for l in range(n):
                acc += B[k, l, i] * p[l]
            kff[k, i] = -acc
        for i in range(m):
            acc = kff[k, i]
            for l in range(i):
                acc -= Ls[k, i, l] * kff[k, l]
            kff[k, i] = acc / Ls[k, i, i]
        for i in range(m - 1, -1, -1):
            acc = kff[k, i]
            for l in range(i + 1, m):
                acc -= Ls[k, l, i] * kff[k, l]
            kff[k, i] = acc / Ls[k, i, i]
        if k > 0:
            for i in range(n):
                acc = gx[k, i] + bx[k, i]
                for l in range(n):
                    acc += A[k, l, i] * p[l]
                for l in range(m):
                    acc += G[k, l, i] * kff[k, l]
                pn[i] = acc
            for i in range(n):
                p[i] = pn[i]

    for i in range(n):
        dxs[0, i] = 0.0   # x_0 is fixed
    for k in range(N):
        for i in range(m):
            acc = kff[k, i]
            for l in range(n):
                acc += K[k, i, l] * dxs[k, l]
            dus[k, i] = acc
        for i in range(n):
            acc = 0.0
            for l in range(n):
                acc += A[k, i, l] * dxs[k, l]
            for l in range(m):
                acc += B[k, i, l] * dus[k, l]
            dxs[k + 1, i] = acc

    _group_dirs(dxs, xs, xlb, xub, mxl, mxu, sxl, sxu, zxl, zxu,
                cxl, cxu, sigma_mu, corr, dsxl, dsxu, dzxl, dzxu)
    _group_dirs(dus, us, ulb, uub, mul, muu, sul, suu, zul, zuu,
                cul, cuu, sigma_mu, corr, dsul, dsuu, dzul, dzuu)


@njit(cache=True)
def _kernel(A, B, g, Q2, R2, S2, q, r, xlb, xub, ulb, uub,
            mxl, mxu, mul, muu, x0, u_init,
            max_iter, tau, tol_feas, tol_kkt):
    N = A.shape[0]
    n = A.shape[1]
    m = B.shape[2]

    xs = np.zeros((N + 1, n))
    us = u_init.copy()
    for i in range(n):
        xs[0, i] = x0[i]
    for k in range(N):
        for i in range(n):
            acc = g[k, i]
            for l in range(n):
                acc += A[k, i, l] * xs[k, l]
            for l in range(m):
                acc += B[k, i, l] * us[k, l]
            xs[k + 1, i] = acc

    # slacks/duals per bound; placeholders (s=1, z=0) where a bound is absent
    sxl = np.ones((N + 1, n)); zxl = np.zeros((N + 1, n))
    sxu = np.ones((N + 1, n)); zxu = np.zeros((N + 1, n))
    sul = np.ones((N, m)); zul = np.zeros((N, m))
    suu = np.ones((N, m)); zuu = np.zeros((N, m))
    n_c = _group_init(xs, xlb, xub, mxl, mxu, sxl, sxu, zxl, zxu)
    n_c += _group_init(us, ulb, uub, mul, muu, sul, suu, zul, zuu)

    Ls = np.zeros((N, m, m))
    G = np.zeros((N, m, n))
    K = np.zeros((N, m, n))
    gx = np.zeros((N + 1, n))
    gu = np.zeros((N, m))
    bx = np.zeros((N + 1, n))
    bu = np.zeros((N, m))
    dxs = np.zeros((N + 1, n))
    dus = np.zeros((N, m))
    kff = np.zeros((N, m))
    pvec = np.zeros(n)
    pnew = np.zeros(n)
    lam = np.zeros(n)
    lamn = np.zeros(n)
    dsxl = np.zeros((N + 1, n)); dzxl = np.zeros((N + 1, n))
    dsxu = np.zeros((N + 1, n)); dzxu = np.zeros((N + 1, n))
    dsul = np.zeros((N, m)); dzul = np.zeros((N, m))
    dsuu = np.zeros((N, m)); dzuu = np.zeros((N, m))
    cxl = np.zeros((N + 1, n)); cxu = np.zeros((N + 1, n))
    cul = np.zeros((N, m)); cuu = np.zeros((N, m))

    converged = False
    iters = 0
    best = np.inf
    flat = 0
    endgame = 0

    for it in range(max_iter):
        iters = it

        # objective gradients at the current iterate
        for k in range(N):
            for i in range(n):
                acc = q[k, i]
                for l in range(n):
                    acc += Q2[k, i, l] * xs[k, l]
                for l in range(m):
                    acc += S2[k, l, i] * us[k, l]
                gx[k, i] = acc
            for i in range(m):
                acc = r[k, i]
                for l in range(m):
                    acc += R2[k, i, l] * us[k, l]
                for l in range(n):
                    acc += S2[k, i, l] * xs[k, l]
                gu[k, i] = acc
        for i in range(n):
            acc = q[N, i]
            for l in range(n):
                acc += Q2[N, i, l] * xs[N, l]
            gx[N, i] = acc

        # convergence metrics, matching the shared KKT report
        viol, r_p, compl, gap = _group_metrics(
            xs, xlb, xub, mxl, mxu, sxl, sxu, zxl, zxu)
        v2, rp2, c2, g2 = _group_metrics(
            us, ulb, uub, mul, muu, sul, suu, zul, zuu)
        viol = max(viol, v2)
        r_p = max(r_p, rp2)
        compl = max(compl, c2)
        mu = (gap + g2) / n_c if n_c > 0 else 0.0

        stat = 0.0
        for i in range(n):
            lam[i] = -(gx[N, i] + zxu[N, i] - zxl[N, i])
        for k in range(N - 1, -1, -1):
            for i in range(m):
                acc = gu[k, i] + (zuu[k, i] - zul[k, i])
                for l in range(n):
                    acc -= B[k, l, i] * lam[l]
                stat = max(stat, abs(acc))
            if k > 0:
                for i in range(n):
                    acc = -gx[k, i] - (zxu[k, i] - zxl[k, i])
                    for l in range(n):
                        acc += A[k, l, i] * lam[l]
                    lamn[i] = acc
                for i in range(n):
                    lam[i] = lamn[i]

        if viol <= 0.3 * tol_feas and r_p <= tol_feas \
                and stat <= 0.3 * tol_kkt and compl <= 0.3 * tol_kkt:
            converged = True
            break
        # progress bookkeeping: stop fast once mu collapsed without the
        # metrics following (round-off floor), stop eventually regardless
        metric = max(max(viol, r_p), max(stat, compl))
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

        # diverging multipliers (infeasible instance): stop before the
        # barrier ratios overflow; absent bounds hold neutral s=1, z=0
        zpeak = max(max(np.max(zxl), np.max(zxu)),
                    max(np.max(zul), np.max(zuu)))
        sfloor = min(min(np.min(sxl), np.min(sxu)),
                     min(np.min(sul), np.min(suu)))
        if not np.isfinite(mu) or zpeak > 1e140 or sfloor < 1e-140:
            break

        if not _factorize(A, B, Q2, R2, S2, mxl, mxu, mul, muu,
                          sxl, sxu, sul, suu, zxl, zxu, zul, zuu, Ls, G, K):
            break

        # affine predictor
        _direction(A, B, Ls, G, K, gx, gu, bx, bu, dxs, dus,
                   xs, us, xlb, xub, ulb, uub, mxl, mxu, mul, muu,
                   sxl, sxu, sul, suu, zxl, zxu, zul, zuu,
                   cxl, cxu, cul, cuu, 0.0, False,
                   dsxl, dsxu, dzxl, dzxu, dsul, dsuu, dzul, dzuu,
                   kff, pvec, pnew)

        a_p = 1.0
        a_d = 1.0
        if n_c > 0:
            ap1, ad1 = _group_alpha(mxl, mxu, sxl, sxu, zxl, zxu,
                                    dsxl, dsxu, dzxl, dzxu, 1.0)
            ap2, ad2 = _group_alpha(mul, muu, sul, suu, zul, zuu,
                                    dsul, dsuu, dzul, dzuu, 1.0)
            ap_aff = min(ap1, ap2)
            ad_aff = min(ad1, ad2)
            gap_aff = _group_gap_at(mxl, mxu, sxl, sxu, zxl, zxu,
                                    dsxl, dsxu, dzxl, dzxu, ap_aff, ad_aff)
            gap_aff += _group_gap_at(mul, muu, sul, suu, zul, zuu,
                                     dsul, dsuu, dzul, dzuu, ap_aff, ad_aff)
            mu_aff = gap_aff / n_c
            ratio = mu_aff / mu if mu > 0.0 else 0.0
            sigma_mu = ratio * ratio * ratio * mu
            base = min(tau * ap_aff, tau * ad_aff)   # affine step, to-boundary
            cxl[:, :] = dsxl * dzxl
            cxu[:, :] = dsxu * dzxu
            cul[:, :] = dsul * dzul
            cuu[:, :] = dsuu * dzuu

            # corrector, falling back to plain centering when it blocks
            _direction(A, B, Ls, G, K, gx, gu, bx, bu, dxs, dus,
                       xs, us, xlb, xub, ulb, uub, mxl, mxu, mul, muu,
                       sxl, sxu, sul, suu, zxl, zxu, zul, zuu,
                       cxl, cxu, cul, cuu, sigma_mu, True,
                       dsxl, dsxu, dzxl, dzxu, dsul, dsuu, dzul, dzuu,
                       kff, pvec, pnew)
            ap1, ad1 = _group_alpha(mxl, mxu, sxl, sxu, zxl, zxu,
                                    dsxl, dsxu, dzxl, dzxu, tau)
            ap2, ad2 = _group_alpha(mul, muu, sul, suu, zul, zuu,
                                    dsul, dsuu, dzul, dzuu, tau)
            a_p = min(ap1, ap2)
            a_d = min(ad1, ad2)
            if min(a_p, a_d) < 0.5 * base:
                _direction(A, B, Ls, G, K, gx, gu, bx, bu, dxs, dus,
                           xs, us, xlb, xub, ulb, uub, mxl, mxu, mul, muu,
                           sxl, sxu, sul, suu, zxl, zxu, zul, zuu,
                           cxl, cxu, cul, cuu, sigma_mu, False,
                           dsxl, dsxu, dzxl, dzxu, dsul, dsuu, dzul, dzuu,
                           kff, pvec, pnew)
                ap1, ad1 = _group_alpha(mxl, mxu, sxl, sxu, zxl, zxu,
                                        dsxl, dsxu, dzxl, dzxu, tau)
                ap2, ad2 = _group_alpha(mul, muu, sul, suu, zul, zuu,
                                        dsul, dsuu, dzul, dzuu, tau)
                a_p = min(ap1, ap2)
                a_d = min(ad1, ad2)

        if a_p < 1e-12 and a_d < 1e-12:
            break

        for k in range(N + 1):
            for i in range(n):
                xs[k, i] += a_p * dxs[k, i]
        for k in range(N):
            for i in range(m):
                us[k, i] += a_p * dus[k, i]
        for k in range(N + 1):
            for i in range(n):
                sxl[k, i] += a_p * dsxl[k, i]
                sxu[k, i] += a_p * dsxu[k, i]
                zxl[k, i] += a_d * dzxl[k, i]
                zxu[k, i] += a_d * dzxu[k, i]
        for k in range(N):
            for i in range(m):
                sul[k, i] += a_p * dsul[k, i]
                suu[k, i] += a_p * dsuu[k, i]
                zul[k, i] += a_d * dzul[k, i]
                zuu[k, i] += a_d * dzuu[k, i]
        iters = it + 1

    # hygiene rollout: keep the dynamics exact to round-off
    for k in range(N):
        for i in range(n):
            acc = g[k, i]
            for l in range(n):
                acc += A[k, i, l] * xs[k, l]
            for l in range(m):
                acc += B[k, i, l] * us[k, l]
            xs[k + 1, i] = acc
    return xs, us, zxl, zxu, zul, zuu, iters, converged


def _bound_masks(qp: StructuredQp):
    mxl = np.isfinite(qp.x_lb)
    mxu = np.isfinite(qp.x_ub)
    mxl[0] = False  # x_0 is fixed data; its bounds are not constraints
    mxu[0] = False
    return mxl, mxu, np.isfinite(qp.u_lb), np.isfinite(qp.u_ub)


def solve_structured(qp: StructuredQp,
                     settings: Optional[IpmSettings] = None,
                     warm_start=None) -> QpSolution:
    """Solve a :class:`StructuredQp` with the Riccati interior-point method.

    ``warm_start`` may be a previous :class:`QpSolution` or an (N, m)
    input array; it seeds the primal iterate. Contradictory bounds are
    reported as status ``"infeasible"``.
    """
    settings = settings or DEFAULT_SETTINGS
    t0 = time.perf_counter()
    mxl, mxu, mul, muu = _bound_masks(qp)

    if warm_start is None:
        u0 = np.zeros((qp.N, qp.m))
    elif isinstance(warm_start, QpSolution):
        u0 = np.array(warm_start.inputs, dtype=float)
    else:
        u0 = np.array(warm_start, dtype=float)
    if u0.shape != (qp.N, qp.m):
        raise ValueError("warm start inputs have the wrong shape")

    bad = (np.any((qp.x_lb[1:] > qp.x_ub[1:]) & mxl[1:] & mxu[1:])
           or np.any((qp.u_lb > qp.u_ub) & mul & muu))
    if bad:
        xs = qp.rollout(u0)
        duals = BoundDuals.zeros(qp.N, qp.n, qp.m)
        return finalize_solution(qp, xs, u0, duals, 0,
                                 time.perf_counter() - t0, "infeasible")

    c = np.ascontiguousarray
    xs, us, zxl, zxu, zul, zuu, iters, converged = _kernel(
        c(qp.A), c(qp.B), c(qp.g), c(2.0 * qp.Q), c(2.0 * qp.R),
        c(2.0 * qp.S), c(qp.q), c(qp.r),
        c(qp.x_lb), c(qp.x_ub), c(qp.u_lb), c(qp.u_ub),
        mxl, mxu, mul, muu, c(qp.x0), c(u0),
        settings.max_iter, settings.tau, settings.tol_feas, settings.tol_kkt)

    duals = BoundDuals(x_lo=zxl, x_hi=zxu, u_lo=zul, u_hi=zuu)
    lo = np.where(mxl, qp.x_lb - xs, -np.inf).max(initial=-np.inf)
    hi = np.where(mxu, xs - qp.x_ub, -np.inf).max(initial=-np.inf)
    ulo = np.where(mul, qp.u_lb - us, -np.inf).max(initial=-np.inf)
    uhi = np.where(muu, us - qp.u_ub, -np.inf).max(initial=-np.inf)
    viol = max(0.0, lo, hi, ulo, uhi)
    hint = "max_iter"
    if not converged and viol > 1e-6:
        hint = "infeasible"
    return finalize_solution(qp, xs, us, duals, int(iters),
                             time.perf_counter() - t0, hint)
