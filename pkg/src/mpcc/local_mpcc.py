"""Contouring control in a local curvilinear frame.

The controller state is (vx, vy, s, d): global-frame velocities plus
arc-length position and signed normal offset relative to the path. Per
stage the frame angle is frozen at the previous plan's s value, which
makes the discrete update exact on straight segments: s and d simply
accumulate the tangential and normal projection of the position
increment. Only four states and two inputs remain, so the per-period
QP is about half the size of the global formulation.

The sign of d matches :meth:`mpcc.geometry.ParametricPath.project`:
positive on the side the +90 degree normal points to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ParametricPath
from .global_mpcc import (DEGRADED_VIOLATION, EXTENSION_FRACTION,
                          RELAX_PENALTY, ControlStep, recovery_step)
from .plant import Limits, MachineInput, MachineState
from .qp import (IpmSettings, QpSolution, StageLtv, StructuredQp,
                 solve_condensed, solve_reference, solve_structured)

DEFAULT_TRUST_HALFWIDTH = 4e-4   # m of arc length around the frozen frames
DEFAULT_PROJECTION_WINDOW = 2e-3
# Local frames are frozen at the stage's own expansion point, one full
# stage staler than the global formulation's lookahead freeze, so the
# deviation prediction drifts further from the true projected distance
# and the enforced corridor needs the extra margin.
BAND_FRACTION = 0.70

_BACKENDS = {
    "structured": solve_structured,
    "condensed": solve_condensed,
    "reference": lambda qp, settings=None, warm_start=None: solve_reference(qp),
}


@dataclass(frozen=True)
class LocalWeights:
    """Objective weights for the local formulation.

    Defaults frozen from the same tuning pass as the global weights;
    ``progress`` is higher here because the deviation band costs the
    local model less speed through curvature than the paired lag and
    contour penalties cost the global one.
    """

    contour: float = 1e8
    velocity: float = 1e-2
    accel: float = 1e-2
    progress: float = 6e3
    terminal_scale: float = 10.0

    def __post_init__(self):
        if self.accel <= 0.0:
            raise ValueError("input weights must be positive definite")
        for name in ("contour", "velocity", "progress"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} weight must be nonnegative")
        if self.terminal_scale <= 0.0:
            raise ValueError("terminal_scale must be positive")


def local_stages(path: ParametricPath, sigma, period: float):
    """Stage matrices (A, B) for frame angles frozen at ``sigma``.

    The update is exact for the frozen frames: with theta the tangent
    angle, s gains (cos, sin) . dp and d gains (-sin, cos) . dp where
    dp is the exact double-integrator position increment.
    """
    sigma = np.asarray(sigma, dtype=float)
    N = sigma.shape[0]
    T = float(period)
    theta = path.tangent_angles(sigma)
    ct, st = np.cos(theta), np.sin(theta)

    A = np.zeros((N, 4, 4))
    A[:, [0, 1, 2, 3], [0, 1, 2, 3]] = 1.0
    A[:, 2, 0] = T * ct
    A[:, 2, 1] = T * st
    A[:, 3, 0] = -T * st
    A[:, 3, 1] = T * ct

    B = np.zeros((N, 4, 2))
    h = 0.5 * T * T
    B[:, 0, 0] = T
    B[:, 1, 1] = T
    B[:, 2, 0] = h * ct
    B[:, 2, 1] = h * st
    B[:, 3, 0] = -h * st
    B[:, 3, 1] = h * ct
    return A, B


def local_stage(theta: float, period: float) -> StageLtv:
    """Single stage of the curvilinear model at a fixed frame angle."""
    T = float(period)
    ct, st = np.cos(float(theta)), np.sin(float(theta))
    A = np.eye(4)
    A[2, 0] = T * ct
    A[2, 1] = T * st
    A[3, 0] = -T * st
    A[3, 1] = T * ct
    B = np.zeros((4, 2))
    h = 0.5 * T * T
    B[0, 0] = T
    B[1, 1] = T
    B[2, 0] = h * ct
    B[2, 1] = h * st
    B[3, 0] = -h * st
    B[3, 1] = h * ct
    return StageLtv(A=A, B=B, g=np.zeros(4))


def trust_region_bounds(path: ParametricPath, sigma,
                        halfwidth: float = DEFAULT_TRUST_HALFWIDTH,
                        measured_s: Optional[float] = None):
    """Per-stage s interval around the frozen frames, clamped to [0, L].

    Keeps the plan where the frozen frame angles are meaningful; row k
    of the returned (len(sigma), 2) array bounds state s_k. The stage-0
    interval is widened to contain ``measured_s`` so the initial state
    is always admissible.
    """
    sigma = np.asarray(sigma, dtype=float)
    lo = path.clamp(sigma - halfwidth)
    hi = path.clamp(sigma + halfwidth)
    if measured_s is not None:
        lo[0] = min(lo[0], float(measured_s))
        hi[0] = max(hi[0], float(measured_s))
    return np.stack([lo, hi], axis=1)


def assemble_local_qp(path: ParametricPath, x0, sigma,
                      weights: LocalWeights, limits: Limits, period: float,
                      relax_band: bool = False, open_trust: bool = False,
                      trust_halfwidth: float = DEFAULT_TRUST_HALFWIDTH) -> StructuredQp:
    """Build the local-frame QP for one control period.

    ``sigma`` is the shifted previous s trajectory including the
    terminal stage (N+1 values); stage k freezes its frame angle at
    sigma[k]. ``x0`` is (vx, vy, s, d). ``open_trust`` lifts only the
    trust region, the first recovery rung after a measurement jump;
    ``relax_band`` additionally trades the contour corridor for a heavy
    quadratic penalty, the last-resort rung.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (4,):
        raise ValueError("local state has 4 components")
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.shape[0] < 2:
        raise ValueError("sigma must hold one arc length per stage")
    N = sigma.shape[0] - 1
    A, B = local_stages(path, sigma[:N], period)
    g = np.zeros((N, 4))

    w = weights
    band = RELAX_PENALTY if relax_band else 0.0
    Q = np.zeros((N + 1, 4, 4))
    Q[:N, np.arange(4), np.arange(4)] = np.array(
        [w.velocity, w.velocity, 0.0, w.contour + band])
    Q[N, np.arange(4), np.arange(4)] = np.array(
        [w.velocity, w.velocity, 0.0, w.terminal_scale * w.contour + band])
    R = np.zeros((N, 2, 2))
    R[:, np.arange(2), np.arange(2)] = w.accel
    S = np.zeros((N, 2, 4))
    q = np.zeros((N + 1, 4))
    q[N, 2] = -w.progress
    r = np.zeros((N, 2))

    tol = np.inf if relax_band else BAND_FRACTION * limits.tolerance
    x_lb = np.tile(np.array([-limits.v_max, -limits.v_max, 0.0, -tol]),
                   (N + 1, 1))
    x_ub = np.tile(np.array([limits.v_max, limits.v_max, path.length, tol]),
                   (N + 1, 1))
    if not (relax_band or open_trust):
        trust = trust_region_bounds(path, sigma, trust_halfwidth,
                                    measured_s=float(x0[2]))
        valid = path.validity_bounds(
            sigma, EXTENSION_FRACTION * limits.tolerance)
        x_lb[:, 2] = trust[:, 0]
        x_ub[:, 2] = np.minimum(trust[:, 1], valid)
    x_lb[N, :2] = -limits.v_terminal
    x_ub[N, :2] = limits.v_terminal
    u_lb = np.full((N, 2), -limits.a_max)
    u_ub = np.full((N, 2), limits.a_max)

    return StructuredQp.from_arrays(x0, A, B, g, Q, R, S, q, r,
                                    x_lb, x_ub, u_lb, u_ub)


class LocalMpccController:
    """Receding-horizon contouring controller in the local frame.

    Measures (s, d) by windowed projection each period, keeps the
    frame linearization and warm start between calls, and applies the
    shared recovery ladder with an extra intermediate rung that lifts
    only the trust region (the contour corridor stays intact there).
    """

    relax_ladder = ({}, {"open_trust": True}, {"relax_band": True})

    def __init__(self, path: ParametricPath, limits: Optional[Limits] = None,
                 weights: Optional[LocalWeights] = None, horizon: int = 35,
                 period: float = 1e-3, backend: str = "structured",
                 settings: Optional[IpmSettings] = None,
                 trust_halfwidth: float = DEFAULT_TRUST_HALFWIDTH,
                 projection_window: float = DEFAULT_PROJECTION_WINDOW):
        if horizon < 1:
            raise ValueError("horizon must be at least one stage")
        if period <= 0.0:
            raise ValueError("period must be positive")
        if backend not in _BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        self.path = path
        self.limits = limits or Limits()
        self.weights = weights or LocalWeights()
        self.horizon = int(horizon)
        self.period = float(period)
        self.backend = backend
        self.settings = settings
        self.trust_halfwidth = float(trust_halfwidth)
        self.projection_window = float(projection_window)
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
        """Most recent measured arc-length position."""
        return self._progress

    def measure(self, state: MachineState):
        """Project the machine position onto the path: (s, d)."""
        if self._progress is None:
            s, d = self.path.project_all(state.position)
        else:
            s, d = self.path.project(state.position, self._progress,
                                     self.projection_window)
        self._progress = float(s)
        self._last_measured = (float(s), float(d))
        return float(s), float(d)

    def build(self, state: MachineState, relax_band: bool = False,
              open_trust: bool = False) -> StructuredQp:
        """Assemble this period's QP from the measured state."""
        s, d = self.measure(state)
        if self._sigma is None:
            self._sigma = np.full(self.horizon + 1, s)
        x0 = np.array([state.vx, state.vy, s, d])
        return assemble_local_qp(self.path, x0, self._sigma, self.weights,
                                 self.limits, self.period,
                                 relax_band=relax_band,
                                 open_trust=open_trust,
                                 trust_halfwidth=self.trust_halfwidth)

    def warm_start(self):
        return self._warm

    def accept(self, solution: QpSolution) -> MachineInput:
        """Adopt a plan: shift the frames and the warm start."""
        xs = np.asarray(solution.states)
        us = np.asarray(solution.inputs)
        s_plan = xs[:, 2]
        self._sigma = self.path.clamp(np.append(s_plan[1:], s_plan[-1]))
        self._warm = np.vstack([us[1:], us[-1:]])
        self.last_solution = solution
        return MachineInput(float(us[0, 0]), float(us[0, 1]))

    def step(self, state: MachineState) -> ControlStep:
        """Build, solve and accept with the recovery ladder."""
        return recovery_step(self, state)
