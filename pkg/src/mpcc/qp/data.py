"""Stage-blocked data model for box-constrained LTV quadratic programs.

The decision variables are states x_0..x_N and inputs u_0..u_{N-1} tied
by x_{k+1} = A_k x_k + B_k u_k + g_k with x_0 fixed. The objective is

    sum_k  x_k' Q_k x_k + u_k' R_k u_k + 2 u_k' S_k x_k + q_k . x_k + r_k . u_k
         + x_N' Q_N x_N + q_N . x_N

with the weights entering literally (no 1/2 factor), so a squared error
gamma * e^2 is expressed by putting gamma on the diagonal of Q. Since
x_0 is data, its stage cost is a constant offset and its bounds are
ignored by every solver.

Storage is stage-blocked throughout: stacked (N, n, n)-style arrays, no
global sparse matrix is ever assembled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

_CONTRACT_FEAS = 1e-8   # dynamics residual / bound violation for "optimal"
_CONTRACT_KKT = 1e-6    # stationarity / complementarity for "optimal"


def _filled(value, shape, fill=0.0):
    if value is None:
        return np.full(shape, fill, dtype=float)
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    return arr


@dataclass
class StageLtv:
    """One stage of the LTV problem: dynamics, cost and bounds.

    Bounds are per-component; use +-inf for absent ones. ``x_lb``/``x_ub``
    bound this stage's state x_k (ignored for k = 0, where x_0 is fixed).
    """

    A: np.ndarray
    B: np.ndarray
    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    x_lb: Optional[np.ndarray] = None
    x_ub: Optional[np.ndarray] = None
    u_lb: Optional[np.ndarray] = None
    u_ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A must be square")
        n = self.A.shape[0]
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise ValueError("B must have the same row count as A")
        m = self.B.shape[1]
        self.Q = _filled(self.Q, (n, n))
        self.R = _filled(self.R, (m, m))
        self.S = _filled(self.S, (m, n))
        self.g = _filled(self.g, (n,))
        self.q = _filled(self.q, (n,))
        self.r = _filled(self.r, (m,))
        self.x_lb = _filled(self.x_lb, (n,), -np.inf)
        self.x_ub = _filled(self.x_ub, (n,), np.inf)
        self.u_lb = _filled(self.u_lb, (m,), -np.inf)
        self.u_ub = _filled(self.u_ub, (m,), np.inf)


@dataclass
class TerminalBlock:
    """Terminal cost x_N' Q x_N + q . x_N and terminal state bounds."""

    Q: np.ndarray
    q: Optional[np.ndarray] = None
    x_lb: Optional[np.ndarray] = None
    x_ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        n = self.Q.shape[0]
        if self.Q.shape != (n, n):
            raise ValueError("terminal Q must be square")
        self.q = _filled(self.q, (n,))
        self.x_lb = _filled(self.x_lb, (n,), -np.inf)
        self.x_ub = _filled(self.x_ub, (n,), np.inf)


class StructuredQp:
    """Box-constrained LTV QP stored as stacked stage arrays.

    Can be built either from a list of :class:`StageLtv` plus a
    :class:`TerminalBlock`, or directly from stacked arrays via
    :meth:`from_arrays` (the fast path used by the controllers). The
    cost arrays Q and q hold N+1 entries with the terminal block last.
    """

    def __init__(self, x0, stages, terminal: TerminalBlock):
        if not stages:
            raise ValueError("need at least one stage")
        n = stages[0].A.shape[0]
        m = stages[0].B.shape[1]
        for i, st in enumerate(stages):
            if st.A.shape != (n, n) or st.B.shape != (n, m):
                raise ValueError(f"stage {i} dimensions disagree with stage 0")
        if terminal.Q.shape != (n, n):
            raise ValueError("terminal dimensions disagree with the stages")
        N = len(stages)
        self.x0 = _filled(np.asarray(x0, dtype=float), (n,))
        self.A = np.stack([st.A for st in stages])
        self.B = np.stack([st.B for st in stages])
        self.g = np.stack([st.g for st in stages])
        self.Q = np.stack([st.Q for st in stages] + [terminal.Q])
        self.R = np.stack([st.R for st in stages])
        self.S = np.stack([st.S for st in stages])
        self.q = np.stack([st.q for st in stages] + [terminal.q])
        self.r = np.stack([st.r for st in stages])
        self.x_lb = np.stack([st.x_lb for st in stages] + [terminal.x_lb])
        self.x_ub = np.stack([st.x_ub for st in stages] + [terminal.x_ub])
        self.u_lb = np.stack([st.u_lb for st in stages])
        self.u_ub = np.stack([st.u_ub for st in stages])
        self._validate()

    @classmethod
    def from_arrays(cls, x0, A, B, g, Q, R, S, q, r,
                    x_lb, x_ub, u_lb, u_ub) -> "StructuredQp":
        """Wrap pre-stacked arrays without copying (fast assembly path)."""
        self = cls.__new__(cls)
        self.x0 = np.asarray(x0, dtype=float)
        self.A, self.B, self.g = A, B, g
        self.Q, self.R, self.S, self.q, self.r = Q, R, S, q, r
        self.x_lb, self.x_ub, self.u_lb, self.u_ub = x_lb, x_ub, u_lb, u_ub
        self._validate()
        return self

    def _validate(self):
        N, n, m = self.N, self.n, self.m
        shapes = {
            "x0": (self.x0, (n,)), "A": (self.A, (N, n, n)),
            "B": (self.B, (N, n, m)), "g": (self.g, (N, n)),
            "Q": (self.Q, (N + 1, n, n)), "R": (self.R, (N, m, m)),
            "S": (self.S, (N, m, n)), "q": (self.q, (N + 1, n)),
            "r": (self.r, (N, m)), "x_lb": (self.x_lb, (N + 1, n)),
            "x_ub": (self.x_ub, (N + 1, n)), "u_lb": (self.u_lb, (N, m)),
            "u_ub": (self.u_ub, (N, m)),
        }
        for name, (arr, shape) in shapes.items():
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
        for name in ("x0", "A", "B", "g", "Q", "R", "S", "q", "r"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")
        for name in ("x_lb", "x_ub", "u_lb", "u_ub"):
            if np.any(np.isnan(getattr(self, name))):
                raise ValueError(f"{name} contains NaN")

    # ------------------------------------------------------------------

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    def num_variables(self) -> int:
        """Decision variable count of the sparse form, (N+1) n + N m."""
        return (self.N + 1) * self.n + self.N * self.m

    @property
    def stages(self):
        """Materialize the stage view (copies; meant for inspection/tests)."""
        return [
            StageLtv(A=self.A[k], B=self.B[k], Q=self.Q[k], R=self.R[k],
                     S=self.S[k], g=self.g[k], q=self.q[k], r=self.r[k],
                     x_lb=self.x_lb[k], x_ub=self.x_ub[k],
                     u_lb=self.u_lb[k], u_ub=self.u_ub[k])
            for k in range(self.N)
        ]

    @property
    def terminal(self) -> TerminalBlock:
        return TerminalBlock(Q=self.Q[-1], q=self.q[-1],
                             x_lb=self.x_lb[-1], x_ub=self.x_ub[-1])

    def rollout(self, us: np.ndarray) -> np.ndarray:
        """States produced by the input sequence from the fixed x0."""
        us = np.asarray(us, dtype=float)
        xs = np.zeros((self.N + 1, self.n))
        xs[0] = self.x0
        for k in range(self.N):
            xs[k + 1] = self.A[k] @ xs[k] + self.B[k] @ us[k] + self.g[k]
        return xs

    def objective(self, xs: np.ndarray, us: np.ndarray) -> float:
        """Objective value of a (states, inputs) pair."""
        val = float(np.einsum("ki,kij,kj->", xs, self.Q, xs))
        val += float(np.einsum("ki,kij,kj->", us, self.R, us))
        val += 2.0 * float(np.einsum("ki,kij,kj->", us, self.S, xs[:-1]))
        val += float(np.sum(self.q * xs)) + float(np.sum(self.r * us))
        return val

    def gradients(self, xs: np.ndarray, us: np.ndarray):
        """Objective gradients (gx (N+1, n), gu (N, m)) at (xs, us)."""
        gx = 2.0 * np.einsum("kij,kj->ki", self.Q, xs) + self.q
        gx[:-1] += 2.0 * np.einsum("kij,ki->kj", self.S, us)
        gu = 2.0 * np.einsum("kij,kj->ki", self.R, us) + self.r
        gu += 2.0 * np.einsum("kij,kj->ki", self.S, xs[:-1])
        return gx, gu


@dataclass
class BoundDuals:
    """Multipliers for the box constraints, zero where a bound is absent."""

    x_lo: np.ndarray  # (N+1, n)
    x_hi: np.ndarray
    u_lo: np.ndarray  # (N, m)
    u_hi: np.ndarray

    @classmethod
    def zeros(cls, N: int, n: int, m: int) -> "BoundDuals":
        return cls(np.zeros((N + 1, n)), np.zeros((N + 1, n)),
                   np.zeros((N, m)), np.zeros((N, m)))


@dataclass
class QpSolution:
    """Result of one QP solve.

    ``status`` is "optimal" only when the dynamics residual and bound
    violation are below 1e-8 and the KKT stationarity/complementarity
    residual is below 1e-6; otherwise it is "max_iter" or "infeasible".
    """

    states: np.ndarray     # (N+1, n)
    inputs: np.ndarray     # (N, m)
    objective: float
    status: str
    iterations: int
    solve_time: float
    dynamics_residual: float
    bound_violation: float
    kkt_residual: float
    duals: Optional[BoundDuals] = None


def kkt_report(qp: StructuredQp, xs, us, duals: BoundDuals):
    """Uniform optimality metrics: (dynamics, bound violation, kkt).

    Stationarity is measured after eliminating the dynamics multipliers
    with an adjoint recursion, so only the input-space residual remains;
    complementarity uses the true slacks. Stage-0 state bounds are
    excluded (x_0 is fixed data).
    """
    N = qp.N
    pred = np.einsum("kij,kj->ki", qp.A, xs[:-1]) + \
        np.einsum("kij,kj->ki", qp.B, us) + qp.g
    dyn = float(np.max(np.abs(xs[1:] - pred))) if N else 0.0
    dyn = max(dyn, float(np.max(np.abs(xs[0] - qp.x0))))

    def _viol(lo, hi, w):
        v = np.maximum(lo - w, 0.0)
        v = np.maximum(v, w - hi)
        return v

    vx = _viol(qp.x_lb[1:], qp.x_ub[1:], xs[1:])
    vu = _viol(qp.u_lb, qp.u_ub, us)
    viol = max(float(vx.max(initial=0.0)), float(vu.max(initial=0.0)))

    gx, gu = qp.gradients(xs, us)
    zx = duals.x_hi - duals.x_lo
    zx[0] = 0.0
    lam = -(gx[N] + zx[N])
    stat = 0.0
    for k in range(N - 1, -1, -1):
        su = gu[k] + (duals.u_hi[k] - duals.u_lo[k]) - qp.B[k].T @ lam
        stat = max(stat, float(np.max(np.abs(su))))
        if k > 0:
            lam = qp.A[k].T @ lam - gx[k] - zx[k]

    def _compl(z_lo, z_hi, lo, hi, w):
        c = 0.0
        lo_gap = np.where(np.isfinite(lo), w - lo, 0.0)
        hi_gap = np.where(np.isfinite(hi), hi - w, 0.0)
        c = max(c, float(np.max(np.abs(z_lo * lo_gap), initial=0.0)))
        return max(c, float(np.max(np.abs(z_hi * hi_gap), initial=0.0)))

    compl = max(
        _compl(duals.x_lo[1:], duals.x_hi[1:], qp.x_lb[1:], qp.x_ub[1:], xs[1:]),
        _compl(duals.u_lo, duals.u_hi, qp.u_lb, qp.u_ub, us))
    return dyn, viol, max(stat, compl)


def finalize_solution(qp: StructuredQp, xs, us, duals: BoundDuals,
                      iterations: int, solve_time: float,
                      status_hint: str = "max_iter") -> QpSolution:
    """Assemble a QpSolution, granting "optimal" only on contract residuals."""
    dyn, viol, kkt = kkt_report(qp, xs, us, duals)
    if status_hint != "infeasible" and dyn <= _CONTRACT_FEAS \
            and viol <= _CONTRACT_FEAS and kkt <= _CONTRACT_KKT:
        status = "optimal"
    else:
        status = status_hint
    return QpSolution(states=xs, inputs=us, objective=qp.objective(xs, us),
                      status=status, iterations=iterations, solve_time=solve_time,
                      dynamics_residual=dyn, bound_violation=viol,
                      kkt_residual=kkt, duals=duals)


# ----------------------------------------------------------------------
# text serialization

def _fmt(arr) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(arr, dtype=float).ravel())


def dump_qp(qp: StructuredQp, file) -> None:
    """Write a self-describing text dump; floats round-trip bit-exactly."""
    own = isinstance(file, (str, bytes))
    fh = open(file, "w") if own else file
    try:
        fh.write("structured-qp 1\n")
        fh.write(f"{qp.N} {qp.n} {qp.m}\n")
        fh.write(f"x0 {_fmt(qp.x0)}\n")
        for k in range(qp.N):
            fh.write(f"stage {k}\n")
            for name in ("A", "B", "g", "Q", "R", "S", "q", "r"):
                fh.write(f"{name} {_fmt(getattr(qp, name)[k])}\n")
            for name in ("x_lb", "x_ub", "u_lb", "u_ub"):
                fh.write(f"{name} {_fmt(getattr(qp, name)[k])}\n")
        fh.write("terminal\n")
        fh.write(f"Q {_fmt(qp.Q[-1])}\n")
        fh.write(f"q {_fmt(qp.q[-1])}\n")
        fh.write(f"x_lb {_fmt(qp.x_lb[-1])}\n")
        fh.write(f"x_ub {_fmt(qp.x_ub[-1])}\n")
    finally:
        if own:
            fh.close()


def load_qp(file) -> StructuredQp:
    """Read a dump written by :func:`dump_qp`."""
    own = isinstance(file, (str, bytes))
    fh = open(file, "r") if own else file
    try:
        lines = [ln.strip() for ln in fh if ln.strip()]
    finally:
        if own:
            fh.close()
    if not lines or lines[0].split() != ["structured-qp", "1"]:
        raise ValueError("not a structured-qp dump")
    N, n, m = (int(v) for v in lines[1].split())
    pos = 2

    def take(label, shape):
        nonlocal pos
        parts = lines[pos].split()
        if parts[0] != label:
            raise ValueError(f"expected {label!r} at line {pos + 1}, got {parts[0]!r}")
        vals = np.array([float(v) for v in parts[1:]])
        if vals.size != int(np.prod(shape)):
            raise ValueError(f"{label}: expected {np.prod(shape)} values")
        pos += 1
        return vals.reshape(shape)

    x0 = take("x0", (n,))
    stages = []
    for k in range(N):
        if lines[pos] != f"stage {k}":
            raise ValueError(f"expected 'stage {k}' at line {pos + 1}")
        pos += 1
        stages.append(StageLtv(
            A=take("A", (n, n)), B=take("B", (n, m)), g=take("g", (n,)),
            Q=take("Q", (n, n)), R=take("R", (m, m)), S=take("S", (m, n)),
            q=take("q", (n,)), r=take("r", (m,)),
            x_lb=take("x_lb", (n,)), x_ub=take("x_ub", (n,)),
            u_lb=take("u_lb", (m,)), u_ub=take("u_ub", (m,))))
    if lines[pos] != "terminal":
        raise ValueError(f"expected 'terminal' at line {pos + 1}")
    pos += 1
    terminal = TerminalBlock(Q=take("Q", (n, n)), q=take("q", (n,)),
                             x_lb=take("x_lb", (n,)), x_ub=take("x_ub", (n,)))
    return StructuredQp(x0, stages, terminal)
