"""Contouring control in the global frame.

The controller state is (X, Y, vx, vy, s, e_lag, e_con): machine pose
and velocity, a virtual path position s driven by the extra input v_s,
and the lag/contour error pair. Path geometry is frozen per stage at
the shifted previous plan's s trajectory, which turns each control
period into one structured LTV QP. The lag row keeps a unit column on
s (first-order term of the frozen-frame expansion), which is what ties
the virtual position to the tangential position error; the contour row
has no s column because the normal is orthogonal to the path slope.
Neither error state feeds back into the model rows.

The frame convention matches :mod:`mpcc.geometry`: the normal is the
tangent rotated +90 degrees, and e_con = n . (r(s) - p) is minus the
signed projection distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ParametricPath
from .plant import Limits, MachineInput, MachineState
from .qp import (IpmSettings, QpSolution, StageLtv, StructuredQp,
                 solve_condensed, solve_reference, solve_structured)

RELAX_PENALTY = 1e12         # contour weight boost when the band is dropped
DEGRADED_VIOLATION = 1e-4    # worst bound violation an applied plan may carry
# The corridor is enforced on the frozen-frame error prediction, which
# differs from the true projected distance by the linearization error
# accumulated across direction changes. Enforcing only this fraction of
# the tolerance keeps the true distance inside the full band even when
# the plan rides the corridor edge through a corner.
BAND_FRACTION = 0.75
# Frozen frames are extrapolated straight past their own segment, so a plan
# may only commit arc length as far as that extrapolation stays within a
# small fraction of the tolerance. At a sharp vertex this pins the plan to
# the corner until the expansion points themselves have crossed it; on
# gentle polyline joints it is slack.
EXTENSION_FRACTION = 0.2

_BACKENDS = {
    "structured": solve_structured,
    "condensed": solve_condensed,
    "reference": lambda qp, settings=None, warm_start=None: solve_reference(qp),
}


@dataclass(frozen=True)
class GlobalWeights:
    """Objective weights for the global formulation.

    ``lag``/``contour`` penalize the squared error pair, ``velocity``
    damps axis velocities, ``accel``/``virtual_rate`` regularize the
    inputs, ``progress`` is the linear pull on terminal s and
    ``terminal_scale`` multiplies the error weights on the last stage.

    The defaults are frozen from a tuning pass over both sigma
    geometries: ``progress``/``accel`` sit where the progress drive
    saturates the input regularization over most of a 70-stage horizon
    but not a 35-stage one, so the horizon-length trends survive, and
    where the sharp-vertex creep stays unhurried enough that the local
    formulation remains the faster of the two.
    """

    lag: float = 1e8
    contour: float = 1e8
    velocity: float = 1e-2
    accel: float = 1e-2
    virtual_rate: float = 1e-3
    progress: float = 4.8e3
    terminal_scale: float = 10.0

    def __post_init__(self):
        if self.accel <= 0.0 or self.virtual_rate <= 0.0:
            raise ValueError("input weights must be positive definite")
        for name in ("lag", "contour", "velocity", "progress"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} weight must be nonnegative")
        if self.terminal_scale <= 0.0:
            raise ValueError("terminal_scale must be positive")


def error_terms(path: ParametricPath, position, s: float):
    """Lag and contour error of ``position`` against the frame at ``s``."""
    pt = path.point_at(s)
    delta = pt.position - np.asarray(position, dtype=float)
    e_lag = float(pt.tangent @ delta)
    e_con = float(pt.normal @ delta)
    return e_lag, e_con


def linearize_stages(path: ParametricPath, sigma, period: float):
    """Stage matrices (A, B, g) for frames frozen at arc lengths ``sigma``.

    ``sigma[k]`` is the expansion point for the stage-k row, i.e. the
    expected arc length at step k+1 (the shifted previous plan). The
    error rows predict next-step errors from the propagated position,
    the current s and the increment T * v_s; expanding the reference
    point to first order leaves a unit s column in the lag row and
    moves -sigma into its offset.
    """
    sigma = np.asarray(sigma, dtype=float)
    N = sigma.shape[0]
    T = float(period)
    pos, tan = path.frames(sigma)
    tx, ty = tan[:, 0], tan[:, 1]
    nx, ny = -ty, tx

    A = np.zeros((N, 7, 7))
    A[:, [0, 1, 2, 3, 4], [0, 1, 2, 3, 4]] = 1.0
    A[:, 0, 2] = T
    A[:, 1, 3] = T
    A[:, 5, 0] = -tx
    A[:, 5, 1] = -ty
    A[:, 5, 2] = -T * tx
    A[:, 5, 3] = -T * ty
    A[:, 5, 4] = 1.0
    A[:, 6, 0] = -nx
    A[:, 6, 1] = -ny
    A[:, 6, 2] = -T * nx
    A[:, 6, 3] = -T * ny

    B = np.zeros((N, 7, 3))
    h = 0.5 * T * T
    B[:, 0, 0] = h
    B[:, 1, 1] = h
    B[:, 2, 0] = T
    B[:, 3, 1] = T
    B[:, 4, 2] = T
    B[:, 5, 0] = -h * tx
    B[:, 5, 1] = -h * ty
    B[:, 5, 2] = T
    B[:, 6, 0] = -h * nx
    B[:, 6, 1] = -h * ny

    g = np.zeros((N, 7))
    g[:, 5] = tx * pos[:, 0] + ty * pos[:, 1] - sigma
    g[:, 6] = nx * pos[:, 0] + ny * pos[:, 1]
    return A, B, g


def linearize_stage(path: ParametricPath, s_lin: float, period: float):
    """Single-stage variant of :func:`linearize_stages`."""
    A, B, g = linearize_stages(path, np.array([float(s_lin)]), period)
    return StageLtv(A=A[0], B=B[0], g=g[0])


def assemble_global_qp(path: ParametricPath, x0, sigma,
                       weights: GlobalWeights, limits: Limits,
                       period: float, relax_band: bool = False) -> StructuredQp:
    """Build the stage-structured QP for one control period.

    ``sigma`` is the shifted previous s trajectory, one entry per stage
    including the terminal one (N+1 values); stage rows are linearized
    at sigma[1:]. ``x0`` is the full seven-component state; its error
    components must be consistent with its own (s, position) pair. With
    ``relax_band`` the hard contour corridor is replaced by a heavy
    quadratic penalty, the recovery mode for infeasible instances.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (7,):
        raise ValueError("global state has 7 components")
    e_lag, e_con = error_terms(path, x0[:2], x0[4])
    scale = 1.0 + float(np.abs(x0[:2]).max())
    if abs(x0[5] - e_lag) > 1e-9 * scale or abs(x0[6] - e_con) > 1e-9 * scale:
        raise ValueError("x0 error components disagree with its position and s")

    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.shape[0] < 2:
        raise ValueError("sigma must hold one arc length per stage")
    N = sigma.shape[0] - 1
    T = float(period)
    A, B, g = linearize_stages(path, sigma[1:], T)

    w = weights
    band = RELAX_PENALTY if relax_band else 0.0
    stage_diag = np.array([0.0, 0.0, w.velocity, w.velocity, 0.0,
                           w.lag, w.contour + band])
    term_diag = np.array([0.0, 0.0, w.velocity, w.velocity, 0.0,
                          w.terminal_scale * w.lag,
                          w.terminal_scale * w.contour + band])
    Q = np.zeros((N + 1, 7, 7))
    Q[:N, np.arange(7), np.arange(7)] = stage_diag
    Q[N, np.arange(7), np.arange(7)] = term_diag
    R = np.zeros((N, 3, 3))
    R[:, np.arange(3), np.arange(3)] = np.array(
        [w.accel, w.accel, w.virtual_rate])
    S = np.zeros((N, 3, 7))
    q = np.zeros((N + 1, 7))
    q[N, 4] = -w.progress
    r = np.zeros((N, 3))

    tol = np.inf if relax_band else BAND_FRACTION * limits.tolerance
    x_lb = np.tile(np.array([-np.inf, -np.inf, -limits.v_max, -limits.v_max,
                             0.0, -np.inf, -tol]), (N + 1, 1))
    x_ub = np.tile(np.array([np.inf, np.inf, limits.v_max, limits.v_max,
                             path.length, np.inf, tol]), (N + 1, 1))
    x_ub[:, 4] = path.validity_bounds(sigma, EXTENSION_FRACTION * limits.tolerance)
    x_lb[N, 2:4] = -limits.v_terminal
    x_ub[N, 2:4] = limits.v_terminal
    u_lb = np.tile(np.array([-limits.a_max, -limits.a_max, 0.0]), (N, 1))
    u_ub = np.tile(np.array([limits.a_max, limits.a_max,
                             math.sqrt(2.0) * limits.v_max]), (N, 1))

    return StructuredQp.from_arrays(x0, A, B, g, Q, R, S, q, r,
                                    x_lb, x_ub, u_lb, u_ub)


@dataclass
class ControlStep:
    """Outcome of one controller period.

    ``s`` and ``error`` are the controller's own measurements for the
    period (virtual position and frozen-frame contour error for the
    global formulation, projected position and deviation for the local
    one), recorded so callers can log them without re-measuring.
    """

    input: Optional[MachineInput]
    solution: Optional[QpSolution]
    relaxed: bool = False
    degraded: bool = False
    s: float = math.nan
    error: float = math.nan


def recovery_step(controller, state: MachineState) -> ControlStep:
    """Shared solve ladder: plain build, softened rebuilds, degraded accept.

    The controller's ``relax_ladder`` lists build keyword sets from
    strict to loose; the first rung is the nominal problem. A plan from
    a later rung is flagged ``relaxed``. If no rung converges, the least
    infeasible iterate is still applied as long as its worst bound
    violation stays below ``DEGRADED_VIOLATION``; otherwise no input is
    returned and the caller decides what to hold.
    """
    solve = controller._solve
    attempts = []
    outcome = None
    for rung, kwargs in enumerate(controller.relax_ladder):
        sol = solve(controller.build(state, **kwargs),
                    settings=controller.settings,
                    warm_start=controller.warm_start())
        if sol.status == "optimal":
            outcome = ControlStep(controller.accept(sol), sol, relaxed=rung > 0)
            break
        attempts.append((rung, sol))
    if outcome is None:
        rung, best = min(attempts, key=lambda c: c[1].bound_violation)
        if best.bound_violation <= DEGRADED_VIOLATION:
            outcome = ControlStep(controller.accept(best), best,
                                  relaxed=rung > 0, degraded=True)
        else:
            outcome = ControlStep(None, best, degraded=True)
    outcome.s, outcome.error = controller._last_measured
    return outcome


class GlobalMpccController:
    """Receding-horizon contouring controller in the global frame.

    Keeps the virtual path position and the stage-frozen linearization
    frames between calls. ``step`` applies the standard recovery ladder:
    plain solve, band-relaxed resolve, then a degraded accept when the
    best iterate is still nearly feasible.
    """

    relax_ladder = ({}, {"relax_band": True})

    def __init__(self, path: ParametricPath, limits: Optional[Limits] = None,
                 weights: Optional[GlobalWeights] = None, horizon: int = 70,
                 period: float = 1e-3, backend: str = "structured",
                 settings: Optional[IpmSettings] = None):
        if horizon < 1:
            raise ValueError("horizon must be at least one stage")
        if period <= 0.0:
            raise ValueError("period must be positive")
        if backend not in _BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        self.path = path
        self.limits = limits or Limits()
        self.weights = weights or GlobalWeights()
        self.horizon = int(horizon)
        self.period = float(period)
        self.backend = backend
        self.settings = settings
        self._solve = _BACKENDS[backend]
        self.reset()

    def reset(self):
        self._sigma = None
        self._warm = None
        self._progress = None
        self._last_measured = (math.nan, math.nan)
        self.last_solution = None

    @property
    def progress(self) -> Optional[float]:
        """Virtual path position, None before the first build."""
        return self._progress

    def build(self, state: MachineState, relax_band: bool = False) -> StructuredQp:
        """Assemble this period's QP from the measured state."""
        p = state.position
        if self._sigma is None:
            s0, _ = self.path.project_all(p)
            self._progress = float(s0)
            self._sigma = np.full(self.horizon + 1, self._progress)
        e_lag, e_con = error_terms(self.path, p, self._progress)
        self._last_measured = (self._progress, e_con)
        x0 = np.array([p[0], p[1], state.vx, state.vy,
                       self._progress, e_lag, e_con])
        return assemble_global_qp(self.path, x0, self._sigma, self.weights,
                                  self.limits, self.period,
                                  relax_band=relax_band)

    def warm_start(self):
        return self._warm

    def accept(self, solution: QpSolution) -> MachineInput:
        """Adopt a plan: advance the virtual position, shift the frames.

        The next linearization trajectory is the solved s trajectory
        shifted by one stage with the last entry repeated, clamped to
        the path domain.
        """
        xs = np.asarray(solution.states)
        us = np.asarray(solution.inputs)
        s_plan = xs[:, 4]
        self._sigma = self.path.clamp(np.append(s_plan[1:], s_plan[-1]))
        self._progress = float(self._sigma[0])
        self._warm = np.vstack([us[1:], us[-1:]])
        self.last_solution = solution
        return MachineInput(float(us[0, 0]), float(us[0, 1]))

    def step(self, state: MachineState) -> ControlStep:
        """Build, solve and accept with the recovery ladder."""
        return recovery_step(self, state)
