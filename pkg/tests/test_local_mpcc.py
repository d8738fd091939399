"""Local curvilinear controller: stage model, QP shape, recovery rungs."""

import math

import numpy as np
import pytest

from mpcc.geometry import build_path
from mpcc.global_mpcc import RELAX_PENALTY, EXTENSION_FRACTION
from mpcc.local_mpcc import (BAND_FRACTION, DEFAULT_TRUST_HALFWIDTH,
                             LocalMpccController, LocalWeights,
                             assemble_local_qp, local_stage, local_stages,
                             trust_region_bounds)
from mpcc.plant import Limits, MachineState
from mpcc.qp import solve_reference

T = 1e-3
H = 0.5 * T * T


def test_stage_rows_at_axis_angles():
    stage = local_stage(0.0, T)
    A_want = np.eye(4)
    A_want[2, 0] = T
    A_want[3, 1] = T
    B_want = np.array([[T, 0.0], [0.0, T], [H, 0.0], [0.0, H]])
    assert np.array_equal(stage.A, A_want)
    assert np.array_equal(stage.B, B_want)

    # at 90 degrees s follows vy and d follows -vx; cos(pi/2) is not an
    # exact float zero, so those entries are only near machine epsilon
    stage = local_stage(0.5 * math.pi, T)
    assert stage.A[2, 1] == T
    assert stage.A[3, 0] == -T
    assert abs(stage.A[2, 0]) <= 1e-18
    assert abs(stage.A[3, 1]) <= 1e-18
    assert stage.B[2, 1] == H
    assert stage.B[3, 0] == -H


def test_stages_match_single_stage(straight_path):
    sigma = np.array([0.02, 0.05, 0.08])
    A, B = local_stages(straight_path, sigma, T)
    for k in range(3):
        theta = straight_path.tangent_angle(sigma[k])
        stage = local_stage(theta, T)
        assert np.allclose(A[k], stage.A, atol=1e-15)
        assert np.allclose(B[k], stage.B, atol=1e-15)


def test_propagation_matches_simulate_then_project():
    # on a single straight segment the frozen-frame update is exact: the
    # local states must track the projection of the simulated position
    rng = np.random.default_rng(30)
    for _ in range(10):
        phi = rng.uniform(-math.pi, math.pi)
        L = 0.2
        path = build_path([(0.0, 0.0), (L * math.cos(phi), L * math.sin(phi))])
        s0 = rng.uniform(0.04, 0.06)
        d0 = rng.uniform(-1e-3, 1e-3)
        pos, tan = path.frames(np.array([s0]))
        normal = np.array([-tan[0, 1], tan[0, 0]])
        p = pos[0] + d0 * normal
        v = rng.uniform(-0.15, 0.15, size=2)

        steps = 35
        A, B = local_stages(path, np.full(steps, 0.1), T)
        x = np.array([v[0], v[1], s0, d0])
        for k in range(steps):
            u = rng.uniform(-20.0, 20.0, size=2)
            x = A[k] @ x + B[k] @ u
            p = p + T * v + 0.5 * T * T * u
            v = v + T * u
            s_ref, d_ref = path.project_all(p)
            assert abs(x[2] - s_ref) <= 1e-12
            assert abs(x[3] - d_ref) <= 1e-12
            assert np.max(np.abs(x[:2] - v)) <= 1e-12


def test_trust_region_bounds(straight_path):
    sigma = np.full(6, 0.05)
    hw = DEFAULT_TRUST_HALFWIDTH
    bounds = trust_region_bounds(straight_path, sigma)
    assert bounds.shape == (6, 2)
    assert np.all(bounds[:, 0] == 0.05 - hw)
    assert np.all(bounds[:, 1] == 0.05 + hw)

    # clamped at the start of the path
    low = trust_region_bounds(straight_path, np.full(3, 1e-4), halfwidth=5e-4)
    assert np.all(low[:, 0] == 0.0)
    assert np.all(low[:, 1] == pytest.approx(6e-4, abs=1e-18))

    # stage 0 stretches to contain the measurement, later stages do not
    wide = trust_region_bounds(straight_path, sigma, measured_s=0.0521)
    assert wide[0, 1] == 0.0521
    assert wide[0, 0] == 0.05 - hw
    assert np.all(wide[1:, 1] == 0.05 + hw)


def test_assembled_qp_layout(straight_path):
    limits = Limits()
    weights = LocalWeights()
    sigma = np.full(36, 0.05)
    x0 = np.array([0.0, 0.0, 0.05, 0.0])
    qp = assemble_local_qp(straight_path, x0, sigma, weights, limits, T)

    assert qp.N == 35 and qp.n == 4 and qp.m == 2
    assert qp.num_variables() == 214
    assert qp.num_variables() < 357   # about half the global formulation

    band = BAND_FRACTION * limits.tolerance
    assert np.all(qp.x_ub[:, 3] == band)
    assert np.all(qp.x_lb[:, 3] == -band)

    trust = trust_region_bounds(straight_path, sigma, measured_s=0.05)
    valid = straight_path.validity_bounds(
        sigma, EXTENSION_FRACTION * limits.tolerance)
    assert np.array_equal(qp.x_lb[:, 2], trust[:, 0])
    assert np.array_equal(qp.x_ub[:, 2], np.minimum(trust[:, 1], valid))

    assert np.all(qp.x_ub[35, :2] == limits.v_terminal)
    assert np.all(qp.x_lb[35, :2] == -limits.v_terminal)
    assert np.all(qp.u_lb == -limits.a_max)
    assert np.all(qp.u_ub == limits.a_max)

    diag = np.diagonal(qp.Q, axis1=1, axis2=2)
    assert np.all(diag[:35] == [weights.velocity, weights.velocity, 0.0,
                                weights.contour])
    assert np.all(diag[35] == [weights.velocity, weights.velocity, 0.0,
                               weights.terminal_scale * weights.contour])
    assert qp.q[35, 2] == -weights.progress
    assert np.count_nonzero(qp.q) == 1


def test_assembled_qp_recovery_variants(straight_path):
    limits = Limits()
    sigma = np.full(11, 0.05)
    x0 = np.array([0.0, 0.0, 0.05, 0.0])
    band = BAND_FRACTION * limits.tolerance

    opened = assemble_local_qp(straight_path, x0, sigma, LocalWeights(),
                               limits, T, open_trust=True)
    assert np.all(opened.x_lb[:, 2] == 0.0)
    assert np.all(opened.x_ub[:, 2] == straight_path.length)
    assert np.all(opened.x_ub[:, 3] == band)   # corridor stays intact

    relaxed = assemble_local_qp(straight_path, x0, sigma, LocalWeights(),
                                limits, T, relax_band=True)
    assert np.all(np.isinf(relaxed.x_ub[:, 3]))
    assert np.all(relaxed.x_ub[:, 2] == straight_path.length)
    assert np.all(relaxed.Q[:10, 3, 3] == LocalWeights().contour + RELAX_PENALTY)


def test_assemble_validation(straight_path):
    sigma = np.full(11, 0.05)
    with pytest.raises(ValueError, match="4 components"):
        assemble_local_qp(straight_path, np.zeros(3), sigma, LocalWeights(),
                          Limits(), T)
    with pytest.raises(ValueError, match="per stage"):
        assemble_local_qp(straight_path, np.zeros(4), np.array([0.05]),
                          LocalWeights(), Limits(), T)
    with pytest.raises(ValueError, match="positive definite"):
        LocalWeights(accel=0.0)
    with pytest.raises(ValueError, match="nonnegative"):
        LocalWeights(progress=-1.0)


def test_rest_on_path_is_equilibrium_without_progress(straight_path):
    sigma = np.full(11, 0.05)
    qp = assemble_local_qp(straight_path, np.array([0.0, 0.0, 0.05, 0.0]),
                           sigma, LocalWeights(progress=0.0), Limits(), T)
    sol = solve_reference(qp)
    assert sol.status == "optimal"
    assert abs(sol.objective) <= 1e-10
    assert np.max(np.abs(sol.inputs)) <= 1e-4
    assert np.max(np.abs(sol.states[:, 3])) <= 1e-9


def test_progress_weight_drives_motion(straight_path):
    controller = LocalMpccController(straight_path, horizon=35,
                                     backend="reference")
    outcome = controller.step(MachineState(0.01, 0.0, 0.0, 0.0))
    sol = outcome.solution
    assert sol.status == "optimal"
    assert not outcome.relaxed and not outcome.degraded
    assert outcome.input.ax > 0.0
    assert sol.states[35, 2] > sol.states[0, 2]
    # a straight path gives no reason to deviate
    assert np.max(np.abs(sol.states[:, 3])) <= 1e-9
    assert outcome.s == pytest.approx(0.01, abs=1e-15)
    assert outcome.error == 0.0


def test_measure_sign_and_window():
    path = build_path([(0.0, 0.0), (0.1, 0.0), (0.1, 0.1)])
    controller = LocalMpccController(path)
    s, d = controller.measure(MachineState(0.03, 1e-5, 0.0, 0.0))
    assert s == pytest.approx(0.03, abs=1e-15)
    assert d == pytest.approx(1e-5, abs=1e-18)   # left of the +x tangent

    # windowed measurement across the corner agrees with the exhaustive one
    s, d = controller.measure(MachineState(0.0995, 2e-6, 0.0, 0.0))
    probe = MachineState(0.1 - 3e-6, 5e-4, 0.0, 0.0)
    s, d = controller.measure(probe)
    s_ref, d_ref = path.project_all(probe.position)
    assert s == s_ref
    assert d == d_ref
    assert s == pytest.approx(0.1005, abs=1e-12)
    assert d == pytest.approx(3e-6, abs=1e-17)   # left of the +y tangent


def test_controller_accept_shifts_plan(straight_path):
    controller = LocalMpccController(straight_path, horizon=5,
                                     backend="reference")
    outcome = controller.step(MachineState(0.02, 0.0, 0.0, 0.0))
    sol = outcome.solution
    s_plan = sol.states[:, 2]
    assert np.array_equal(controller._sigma,
                          straight_path.clamp(np.append(s_plan[1:],
                                                        s_plan[-1])))
    assert np.array_equal(controller.warm_start(),
                          np.vstack([sol.inputs[1:], sol.inputs[-1:]]))
    assert outcome.input.ax == sol.inputs[0, 0]
    assert outcome.input.ay == sol.inputs[0, 1]


def test_ladder_opens_trust_after_position_jump(straight_path):
    controller = LocalMpccController(straight_path, horizon=35)
    controller.step(MachineState(0.01, 0.0, 0.0, 0.0))

    rungs = []
    original = controller.build

    def spying_build(state, **kwargs):
        rungs.append(dict(kwargs))
        return original(state, **kwargs)

    controller.build = spying_build
    # teleport 1.2 mm down the path: inside the projection window, far
    # outside the trust region of the previous plan
    outcome = controller.step(MachineState(0.0112, 0.0, 0.0, 0.0))
    assert rungs == [{"relax_band": False, "open_trust": False},
                     {"open_trust": True}] or \
        rungs == [{}, {"open_trust": True}]
    assert outcome.relaxed
    assert not outcome.degraded
    assert outcome.input is not None
    assert outcome.s == pytest.approx(0.0112, abs=1e-12)
    # the corridor stayed hard on the winning rung
    assert np.max(np.abs(outcome.solution.states[1:, 3])) \
        <= BAND_FRACTION * Limits().tolerance + 1e-12


def test_ladder_order_is_documented():
    assert LocalMpccController.relax_ladder == (
        {}, {"open_trust": True}, {"relax_band": True})
