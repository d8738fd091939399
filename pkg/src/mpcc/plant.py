"""Biaxial machine dynamics: two decoupled lumped-mass double integrators.

State order is (x, y, vx, vy), inputs are the axis accelerations
(ax, ay). Discretization is exact zero-order hold, so simulation and
prediction use one and the same matrix pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Limits:
    """Axis actuation and velocity limits plus the contour tolerance."""

    a_max: float = 20.0        # acceleration bound per axis [m/s^2]
    v_max: float = 0.2         # velocity bound per axis [m/s]
    v_terminal: float = 2e-3   # terminal velocity bound per axis [m/s]
    tolerance: float = 20e-6   # contour tolerance halfwidth [m]

    def __post_init__(self):
        for name in ("a_max", "v_max", "v_terminal", "tolerance"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.v_terminal > self.v_max:
            raise ValueError("v_terminal must not exceed v_max")


@dataclass(frozen=True)
class MachineState:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def speed(self) -> float:
        return float(np.hypot(self.vx, self.vy))


@dataclass(frozen=True)
class MachineInput:
    ax: float
    ay: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ax, self.ay])


def discretize(T: float):
    """Exact zero-order-hold discretization of the double integrators.

    Returns (A, B) with A (4, 4) and B (4, 2).
    """
    if T <= 0.0:
        raise ValueError("sample time must be positive")
    A = np.array([
        [1.0, 0.0, T, 0.0],
        [0.0, 1.0, 0.0, T],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    B = np.array([
        [0.5 * T * T, 0.0],
        [0.0, 0.5 * T * T],
        [T, 0.0],
        [0.0, T],
    ])
    return A, B


def step(state: MachineState, u: MachineInput, T: float) -> MachineState:
    """Propagate one sample. Inputs are applied as-is, never saturated."""
    if T <= 0.0:
        raise ValueError("sample time must be positive")
    return MachineState(
        x=state.x + T * state.vx + 0.5 * T * T * u.ax,
        y=state.y + T * state.vy + 0.5 * T * T * u.ay,
        vx=state.vx + T * u.ax,
        vy=state.vy + T * u.ay,
    )


def check_feasible(state: MachineState, u: MachineInput, limits: Limits,
                   margin: float = 0.0):
    """List (name, excess) for every violated velocity or input bound.

    An empty list means feasible; values exactly on a bound are feasible.
    ``margin`` loosens the bounds, e.g. to ignore solver-level round-off.
    """
    violations = []
    for name, value, bound in (
        ("vx", state.vx, limits.v_max),
        ("vy", state.vy, limits.v_max),
        ("ax", u.ax, limits.a_max),
        ("ay", u.ay, limits.a_max),
    ):
        excess = abs(value) - bound
        if excess > margin:
            violations.append((name, float(excess)))
    return violations
