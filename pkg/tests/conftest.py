"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
import pytest

from mpcc.geometry import ParametricPath, build_path, sigma_path
from mpcc.global_mpcc import error_terms, linearize_stages
from mpcc.qp import StructuredQp


@pytest.fixture(scope="session")
def smooth_path() -> ParametricPath:
    return sigma_path(sharp=False)


@pytest.fixture(scope="session")
def sharp_path() -> ParametricPath:
    return sigma_path(sharp=True)


@pytest.fixture
def straight_path() -> ParametricPath:
    """One 10 cm segment along +x from the origin."""
    return build_path([(0.0, 0.0), (0.1, 0.0)])


def consistent_state(path, position, s, vx=0.0, vy=0.0):
    """7-state vector whose error components match position and s."""
    e_lag, e_con = error_terms(path, position, s)
    return np.array([position[0], position[1], vx, vy, s, e_lag, e_con])


def arc_joint(path):
    """Arc length of a chord joint inside the large rounded corner."""
    lengths = np.diff(path.cum)
    short = (lengths > 8e-5) & (lengths < 1.2e-4)
    inner = np.nonzero(short[:-1] & short[1:])[0] + 1
    assert inner.size > 10
    return float(path.cum[inner[inner.size // 2]])


def frozen_frame_residual(path, s_joint, period):
    """Contour prediction error for a coasting step across the joint."""
    v_s = 0.06
    s0 = s_joint - 1e-6
    pos, tan = path.frames(np.array([s0]))
    p0, t0 = pos[0], tan[0]
    x0 = np.array([p0[0], p0[1], v_s * t0[0], v_s * t0[1], s0, 0.0, 0.0])
    A, _, g = linearize_stages(path, np.array([s0]), period)
    x1 = A[0] @ x0 + g[0]
    p1 = p0 + period * v_s * t0
    _, e_con = error_terms(path, p1, s0 + period * v_s)
    return abs(x1[6] - e_con)


def random_feasible_qp(rng: np.random.Generator, N=None, n=None, m=None) -> StructuredQp:
    """Random LTV box QP guaranteed feasible.

    A reference trajectory is rolled out from random inputs strictly
    inside the input box, and every finite state bound is placed around
    that trajectory with positive margin, so a strictly feasible point
    exists by construction.
    """
    N = int(N if N is not None else rng.integers(2, 11))
    n = int(n if n is not None else rng.integers(2, 8))
    m = int(m if m is not None else rng.integers(1, 4))

    A = np.eye(n) + 0.3 * rng.normal(size=(N, n, n))
    B = 0.5 * rng.normal(size=(N, n, m))
    g = 0.1 * rng.normal(size=(N, n))

    Q = np.zeros((N + 1, n, n))
    for k in range(N + 1):
        M = rng.normal(size=(n, n))
        Q[k] = 0.1 * M @ M.T + 0.5 * np.eye(n)
    R = np.zeros((N, m, m))
    for k in range(N):
        M = rng.normal(size=(m, m))
        R[k] = 0.1 * M @ M.T + 0.5 * np.eye(m)
    S = 0.05 * rng.normal(size=(N, m, n))
    q = rng.normal(size=(N + 1, n))
    r = rng.normal(size=(N, m))

    x0 = 0.3 * rng.normal(size=n)
    u_ref = rng.uniform(-0.8, 0.8, size=(N, m))
    xs_ref = np.zeros((N + 1, n))
    xs_ref[0] = x0
    for k in range(N):
        xs_ref[k + 1] = A[k] @ xs_ref[k] + B[k] @ u_ref[k] + g[k]

    u_lb = np.full((N, m), -2.0)
    u_ub = np.full((N, m), 2.0)
    x_lb = np.full((N + 1, n), -np.inf)
    x_ub = np.full((N + 1, n), np.inf)
    sel = rng.random((N + 1, n)) < 0.4
    margin = rng.uniform(0.3, 1.5)
    x_lb[sel] = xs_ref[sel] - margin
    x_ub[sel] = xs_ref[sel] + margin

    return StructuredQp.from_arrays(x0, A, B, g, Q, R, S, q, r,
                                    x_lb, x_ub, u_lb, u_ub)


def random_lqr_qp(rng: np.random.Generator, N: int, n: int, m: int) -> StructuredQp:
    """Unconstrained LQR instance: PD costs, no cross term, no offsets."""
    A = np.eye(n) + 0.2 * rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    Q = np.zeros((N + 1, n, n))
    for k in range(N + 1):
        M = rng.normal(size=(n, n))
        Q[k] = 0.2 * M @ M.T + np.eye(n)
    R = np.zeros((N, m, m))
    for k in range(N):
        M = rng.normal(size=(m, m))
        R[k] = 0.2 * M @ M.T + np.eye(m)
    x0 = rng.normal(size=n)
    inf = np.inf
    return StructuredQp.from_arrays(
        x0, np.tile(A, (N, 1, 1)), np.tile(B, (N, 1, 1)), np.zeros((N, n)),
        Q, R, np.zeros((N, m, n)), np.zeros((N + 1, n)), np.zeros((N, m)),
        np.full((N + 1, n), -inf), np.full((N + 1, n), inf),
        np.full((N, m), -inf), np.full((N, m), inf))


def riccati_lqr_trajectory(qp: StructuredQp):
    """Closed-form LQR solution by backward Riccati recursion.

    Valid for unconstrained instances with zero S, g, q, r. The cost
    convention is weight-literal (x'Qx, no 1/2), so the recursion runs
    on the weights as stored.
    """
    N, n, m = qp.N, qp.n, qp.m
    P = qp.Q[N].copy()
    gains = np.zeros((N, m, n))
    for k in range(N - 1, -1, -1):
        A, B = qp.A[k], qp.B[k]
        G = qp.R[k] + B.T @ P @ B
        K = np.linalg.solve(G, B.T @ P @ A)
        gains[k] = K
        P = qp.Q[k] + A.T @ P @ A - A.T @ P @ B @ K
        P = 0.5 * (P + P.T)
    xs = np.zeros((N + 1, n))
    us = np.zeros((N, m))
    xs[0] = qp.x0
    for k in range(N):
        us[k] = -gains[k] @ xs[k]
        xs[k + 1] = qp.A[k] @ xs[k] + qp.B[k] @ us[k]
    return xs, us


def kkt_equality_trajectory(qp: StructuredQp):
    """Dense KKT solve of an unconstrained instance (independent oracle).

    Stacks z = (x_1..x_N, u_0..u_{N-1}), eliminates nothing, and solves
    the stationarity + dynamics system directly. Handles S, g, q, r.
    """
    N, n, m = qp.N, qp.n, qp.m
    nx, nu = N * n, N * m
    nz = nx + nu

    H = np.zeros((nz, nz))
    f = np.zeros(nz)
    for k in range(1, N + 1):
        i = (k - 1) * n
        H[i:i + n, i:i + n] = 2.0 * qp.Q[k]
        f[i:i + n] = qp.q[k]
    for k in range(N):
        iu = nx + k * m
        H[iu:iu + m, iu:iu + m] = 2.0 * qp.R[k]
        f[iu:iu + m] = qp.r[k]
        if k > 0:
            ix = (k - 1) * n
            H[iu:iu + m, ix:ix + n] = 2.0 * qp.S[k]
            H[ix:ix + n, iu:iu + m] = 2.0 * qp.S[k].T
    f[nx:nx + m] += 2.0 * qp.S[0] @ qp.x0

    E = np.zeros((nx, nz))
    e = np.zeros(nx)
    for k in range(N):
        rows = slice(k * n, (k + 1) * n)
        E[rows, k * n:(k + 1) * n] = np.eye(n)
        iu = nx + k * m
        E[rows, iu:iu + m] = -qp.B[k]
        e[rows] = qp.g[k]
        if k > 0:
            E[rows, (k - 1) * n:k * n] = -qp.A[k]
    e[:n] += qp.A[0] @ qp.x0

    K = np.block([[H, E.T], [E, np.zeros((nx, nx))]])
    rhs = np.concatenate([-f, e])
    sol = np.linalg.solve(K, rhs)
    xs = np.vstack([qp.x0, sol[:nx].reshape(N, n)])
    us = sol[nx:nz].reshape(N, m)
    return xs, us
