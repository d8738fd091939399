"""Closed-loop simulation, metrics, and solver timing.

Drives either controller against the double-integrator plant at the
controller period, measures the true tracking error with the exhaustive
projection oracle (never the controller's own windowed or frozen-frame
estimates), and times each control step on the monotonic clock.  Trace
and metrics rows serialize to CSV with 17 significant digits, so a
reload reproduces the in-process metrics bit for bit.
"""

from __future__ import annotations

import io
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import ParametricPath, path_from_csv, sigma_path
from .global_mpcc import GlobalMpccController, GlobalWeights
from .local_mpcc import (DEFAULT_TRUST_HALFWIDTH, LocalMpccController,
                         LocalWeights)
from .plant import Limits, MachineInput, MachineState, check_feasible, step

GEOMETRIES = ("sigma_smooth", "sigma_sharp")
CONTROLLERS = ("global", "local")
BACKENDS = ("structured", "condensed", "oracle")
# the qp package names its cvxopt-backed solver "reference"
_BACKEND_ALIAS = {"structured": "structured", "condensed": "condensed",
                  "oracle": "reference"}

# completion: measured arc position within this much of L at near-zero speed
COMPLETION_ARC = 1e-6
# applied inputs may stick out of the box by solver round-off only;
# anything larger is a controller bug and aborts the run
SNAP_RELATIVE = 1e-6

TRACE_COLUMNS = ("t", "X", "Y", "vx", "vy", "ax", "ay", "s",
                 "e_true", "e_pred", "solve_ms", "slack")
METRIC_COLUMNS = ("rms_tracking", "inf_tracking", "maneuver_time", "steps",
                  "solve_time_mean", "solve_time_max", "completed",
                  "violations")
TIMING_COLUMNS = ("controller", "backend", "N", "mean_ms", "max_ms",
                  "exponent")

BENCH_WARMUP = 3


@dataclass
class Scenario:
    """One closed-loop experiment: geometry, controller, and knobs.

    ``geometry`` is one of the sigma names or a path CSV filename.
    ``weights`` defaults to the tuned weight set of the chosen
    controller; ``trust_halfwidth`` is only meaningful for the local
    controller and must stay None for the global one.
    """

    geometry: str = "sigma_smooth"
    controller: str = "global"
    N: int = 35
    T: float = 1e-3
    weights: Union[GlobalWeights, LocalWeights, None] = None
    limits: Limits = field(default_factory=Limits)
    backend: str = "structured"
    trust_halfwidth: Optional[float] = None
    max_steps: int = 12000
    seed: int = 0

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.T <= 0.0:
            raise ValueError("T must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.weights is None:
            self.weights = (GlobalWeights() if self.controller == "global"
                            else LocalWeights())
        expected = GlobalWeights if self.controller == "global" else LocalWeights
        if not isinstance(self.weights, expected):
            raise ValueError(f"{self.controller} controller needs "
                             f"{expected.__name__}, got "
                             f"{type(self.weights).__name__}")
        if self.trust_halfwidth is not None:
            if self.controller != "local":
                raise ValueError("trust_halfwidth applies to the local "
                                 "controller only")
            if self.trust_halfwidth <= 0.0:
                raise ValueError("trust_halfwidth must be positive")


@dataclass
class RunMetrics:
    """Summary of one closed-loop run."""

    rms_tracking: float
    inf_tracking: float
    maneuver_time: float
    steps: int
    solve_time_mean: float
    solve_time_max: float
    completed: bool
    violations: int

    def __post_init__(self):
        if not (self.inf_tracking >= self.rms_tracking >= 0.0):
            raise ValueError("tracking norms must satisfy inf >= rms >= 0")

    def row(self) -> tuple:
        return (self.rms_tracking, self.inf_tracking, self.maneuver_time,
                self.steps, self.solve_time_mean, self.solve_time_max,
                int(self.completed), self.violations)


@dataclass
class Trace:
    """Per-step log of a run; ``records`` columns are TRACE_COLUMNS."""

    records: np.ndarray
    completed: bool
    violations: int

    def __post_init__(self):
        self.records = np.asarray(self.records, dtype=float)
        if self.records.size == 0:
            self.records = self.records.reshape(0, len(TRACE_COLUMNS))
        if self.records.ndim != 2 or self.records.shape[1] != len(TRACE_COLUMNS):
            raise ValueError(f"trace records need {len(TRACE_COLUMNS)} columns")

    def column(self, name: str) -> np.ndarray:
        return self.records[:, TRACE_COLUMNS.index(name)]

    def __len__(self) -> int:
        return self.records.shape[0]


def make_path(scenario: Scenario) -> ParametricPath:
    """Resolve the scenario geometry to a path."""
    if scenario.geometry == "sigma_smooth":
        return sigma_path(sharp=False)
    if scenario.geometry == "sigma_sharp":
        return sigma_path(sharp=True)
    return path_from_csv(scenario.geometry)


def make_controller(scenario: Scenario, path: Optional[ParametricPath] = None):
    """Build the scenario's controller (shared path may be passed in)."""
    if path is None:
        path = make_path(scenario)
    backend = _BACKEND_ALIAS[scenario.backend]
    if scenario.controller == "global":
        return GlobalMpccController(path, scenario.limits, scenario.weights,
                                    horizon=scenario.N, period=scenario.T,
                                    backend=backend)
    halfwidth = (DEFAULT_TRUST_HALFWIDTH if scenario.trust_halfwidth is None
                 else scenario.trust_halfwidth)
    return LocalMpccController(path, scenario.limits, scenario.weights,
                               horizon=scenario.N, period=scenario.T,
                               backend=backend, trust_halfwidth=halfwidth)


def _snap_input(u: MachineInput, limits: Limits, step_index: int) -> MachineInput:
    """Clamp round-off excursions onto the input box, abort on real ones."""
    bad = check_feasible(MachineState(0, 0, 0, 0), u, limits,
                         margin=SNAP_RELATIVE * limits.a_max)
    bad = [v for v in bad if v[0] in ("ax", "ay")]
    if bad:
        detail = ", ".join(f"{n} exceeds by {e:.3e}" for n, e in bad)
        raise RuntimeError(f"step {step_index}: applied input outside "
                           f"the admissible box ({detail})")
    a = limits.a_max
    return MachineInput(min(max(u.ax, -a), a), min(max(u.ay, -a), a))


def run_closed_loop(scenario: Scenario) -> Tuple[RunMetrics, Trace]:
    """Simulate one scenario to completion or ``max_steps``.

    Each period: measure, assemble with the shifted warm start, solve
    through the recovery ladder, apply the first input, log.  If the
    ladder returns nothing the previous input is held and counted as a
    violation; a ladder failure on the very first step aborts.  The
    ``e_true`` column and the completion test use the all-segment
    projection oracle, independent of controller-internal estimates.
    """
    path = make_path(scenario)
    controller = make_controller(scenario, path)
    limits = scenario.limits
    T = scenario.T
    start = path.point_at(0.0).position
    state = MachineState(float(start[0]), float(start[1]), 0.0, 0.0)

    rows: List[tuple] = []
    violations = 0
    completed = False
    previous: Optional[MachineInput] = None

    for k in range(scenario.max_steps + 1):
        s_true, d_true = path.project_all(state.position)
        if s_true >= path.length - COMPLETION_ARC and state.speed <= limits.v_terminal:
            completed = True
            break
        if k == scenario.max_steps:
            break

        t0 = time.perf_counter()
        outcome = controller.step(state)
        solve_s = time.perf_counter() - t0

        if outcome.input is None:
            if previous is None:
                raise RuntimeError(
                    "step 0: recovery ladder exhausted with no input to hold "
                    f"(worst bound violation "
                    f"{outcome.solution.bound_violation:.3e})")
            violations += 1
            u = previous
        else:
            u = _snap_input(outcome.input, limits, k)
            if outcome.degraded:
                violations += 1
        # the plant update can land one ulp past a saturated velocity
        # bound; count only excursions beyond representation round-off
        violations += len(check_feasible(state, u, limits,
                                         margin=SNAP_RELATIVE * limits.v_max))

        rows.append((k * T, state.x, state.y, state.vx, state.vy,
                     u.ax, u.ay, outcome.s, d_true, outcome.error,
                     solve_s * 1e3, float(outcome.relaxed)))
        state = step(state, u, T)
        previous = u

    trace = Trace(np.array(rows, dtype=float), completed, violations)
    if len(trace) == 0:
        metrics = RunMetrics(0.0, 0.0, 0.0, 0, 0.0, 0.0, completed, violations)
    else:
        metrics = compute_metrics(trace, T)
    return metrics, trace


def compute_metrics(trace: Trace, T: float) -> RunMetrics:
    """Aggregate a trace into RunMetrics (see module doc for exactness)."""
    if len(trace) == 0:
        raise ValueError("cannot compute metrics of an empty trace")
    e = trace.column("e_true")
    solve_ms = trace.column("solve_ms")
    steps = len(trace)
    return RunMetrics(
        rms_tracking=float(np.sqrt(np.mean(e * e))),
        inf_tracking=float(np.max(np.abs(e))),
        maneuver_time=steps * T,
        steps=steps,
        solve_time_mean=float(np.mean(solve_ms)) * 1e-3,
        solve_time_max=float(np.max(solve_ms)) * 1e-3,
        completed=trace.completed,
        violations=trace.violations,
    )


def benchmark_solvers(scenarios: Sequence[Scenario], N_list: Sequence[int],
                      repetitions: int) -> List[dict]:
    """Time every scenario template across horizon lengths.

    Each template runs a capped closed loop per N: ``BENCH_WARMUP``
    steps to absorb compilation and cold warm starts, then
    ``repetitions`` timed steps (each step re-solves the QP, so steps
    are the natural repetition unit).  Rows carry mean/max per-step
    time and the log-log fitted exponent of mean time versus N for the
    template.  Runs are strictly sequential; concurrent timing would
    contend for cores and corrupt the measurement.
    """
    if repetitions < 5:
        raise ValueError("repetitions must be at least 5")
    rows: List[dict] = []
    for template in scenarios:
        means = []
        for N in N_list:
            scenario = replace(template, N=int(N),
                               max_steps=BENCH_WARMUP + repetitions)
            _, trace = run_closed_loop(scenario)
            timed = trace.column("solve_ms")[BENCH_WARMUP:]
            if timed.size == 0:
                timed = trace.column("solve_ms")
            means.append(float(np.mean(timed)))
            rows.append({"controller": scenario.controller,
                         "backend": scenario.backend, "N": int(N),
                         "mean_ms": means[-1],
                         "max_ms": float(np.max(timed)),
                         "exponent": math.nan})
        exponent = fit_exponent(N_list, means)
        for row in rows[-len(N_list):]:
            row["exponent"] = exponent
    return rows


def fit_exponent(N_list: Sequence[int], means: Sequence[float]) -> float:
    """Least-squares slope of log mean time versus log N."""
    if len(N_list) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(np.asarray(N_list, dtype=float)),
                          np.log(np.asarray(means, dtype=float)), 1)
    return float(slope)


# ----------------------------------------------------------------------
# CSV emission; %.17g preserves doubles exactly


def _write_csv(fh: io.TextIOBase, header: Sequence[str], rows) -> None:
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(_format_cell(c) for c in row) + "\n")


def _format_cell(cell) -> str:
    if isinstance(cell, str):
        return cell
    if isinstance(cell, (bool, np.bool_)):
        return str(int(cell))
    if isinstance(cell, (int, np.integer)):
        return str(int(cell))
    return format(float(cell), ".17g")


def trace_to_csv(trace: Trace, target) -> None:
    """Write the per-step records (TRACE_COLUMNS header)."""
    if hasattr(target, "write"):
        _write_csv(target, TRACE_COLUMNS, trace.records)
    else:
        with open(target, "w", encoding="ascii") as fh:
            _write_csv(fh, TRACE_COLUMNS, trace.records)


def trace_from_csv(source, completed: bool = False,
                   violations: int = 0) -> Trace:
    """Reload records written by trace_to_csv.

    The completion flag and violation count live in metrics.csv, not in
    the trace; callers that need them in the Trace pass them back in.
    """
    with warnings.catch_warnings():
        # a header-only file is a valid zero-step trace, not a problem
        warnings.simplefilter("ignore", UserWarning)
        records = np.loadtxt(source, delimiter=",", skiprows=1, ndmin=2)
    if records.size == 0:
        records = records.reshape(0, len(TRACE_COLUMNS))
    return Trace(records, completed, violations)


def metrics_to_csv(metrics, target) -> None:
    """Write one row per RunMetrics (accepts one or a sequence)."""
    if isinstance(metrics, RunMetrics):
        metrics = [metrics]
    rows = [m.row() for m in metrics]
    if hasattr(target, "write"):
        _write_csv(target, METRIC_COLUMNS, rows)
    else:
        with open(target, "w", encoding="ascii") as fh:
            _write_csv(fh, METRIC_COLUMNS, rows)


def timing_to_csv(rows: Sequence[dict], target) -> None:
    """Write benchmark rows (TIMING_COLUMNS header)."""
    table = [[row[c] for c in TIMING_COLUMNS] for row in rows]
    if hasattr(target, "write"):
        _write_csv(target, TIMING_COLUMNS, table)
    else:
        with open(target, "w", encoding="ascii") as fh:
            _write_csv(fh, TIMING_COLUMNS, table)
