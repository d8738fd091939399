"""Plant discretization, propagation and limit checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcc.plant import (Limits, MachineInput, MachineState, check_feasible,
                        discretize, step)

T = 1e-3

finite = st.floats(-5.0, 5.0, allow_nan=False)


def test_discretize_rows():
    A, B = discretize(T)
    assert np.array_equal(A[0], [1.0, 0.0, T, 0.0])
    assert np.array_equal(A[2], [0.0, 0.0, 1.0, 0.0])
    assert np.array_equal(B[0], [0.5 * T * T, 0.0])
    assert np.array_equal(B[2], [T, 0.0])
    assert np.array_equal(A[1], [0.0, 1.0, 0.0, T])
    assert np.array_equal(B[3], [0.0, T])


def test_discretize_rejects_bad_period():
    with pytest.raises(ValueError):
        discretize(0.0)
    with pytest.raises(ValueError):
        step(MachineState(0, 0), MachineInput(0, 0), -1.0)


def test_step_from_rest():
    out = step(MachineState(0, 0, 0, 0), MachineInput(20.0, 0.0), T)
    assert out.x == pytest.approx(1e-5, abs=1e-18)
    assert out.vx == pytest.approx(0.02, abs=1e-18)
    assert out.y == 0.0 and out.vy == 0.0


def test_step_coasting():
    out = step(MachineState(0, 0, 0.2, 0), MachineInput(0.0, 0.0), T)
    assert out.x == pytest.approx(2e-4, abs=1e-18)
    assert out.vx == 0.2


def test_step_matches_matrix_oracle():
    A, B = discretize(T)
    rng = np.random.default_rng(3)
    for _ in range(1000):
        x = rng.uniform(-1.0, 1.0, size=4)
        u = rng.uniform(-20.0, 20.0, size=2)
        out = step(MachineState(*x), MachineInput(*u), T)
        ref = A @ x + B @ u
        assert np.max(np.abs(out.as_array() - ref)) <= 1e-15


@given(x1=st.tuples(finite, finite, finite, finite),
       x2=st.tuples(finite, finite, finite, finite),
       u1=st.tuples(finite, finite), u2=st.tuples(finite, finite),
       a=st.floats(-2.0, 2.0), b=st.floats(-2.0, 2.0))
@settings(max_examples=100, deadline=None)
def test_step_linearity(x1, x2, u1, u2, a, b):
    mixed = step(MachineState(*(a * np.array(x1) + b * np.array(x2))),
                 MachineInput(*(a * np.array(u1) + b * np.array(u2))), T)
    parts = (a * step(MachineState(*x1), MachineInput(*u1), T).as_array()
             + b * step(MachineState(*x2), MachineInput(*u2), T).as_array())
    assert np.max(np.abs(mixed.as_array() - parts)) <= 1e-14


@given(x=st.tuples(finite, finite, finite, finite),
       u=st.tuples(finite, finite))
@settings(max_examples=100, deadline=None)
def test_two_half_steps_equal_one_step(x, u):
    state = MachineState(*x)
    inp = MachineInput(*u)
    twice = step(step(state, inp, T), inp, T)
    once = step(state, inp, 2.0 * T)
    assert np.max(np.abs(twice.as_array() - once.as_array())) <= 1e-13


def test_constant_input_matches_continuous_solution():
    u = MachineInput(3.0, -1.5)
    state = MachineState(0.01, -0.02, 0.05, 0.1)
    for k in range(1, 101):
        state = step(state, u, T)
        t = k * T
        assert state.x == pytest.approx(0.01 + 0.05 * t + 0.5 * 3.0 * t * t,
                                        abs=1e-13)
        assert state.vy == pytest.approx(0.1 - 1.5 * t, abs=1e-13)


def test_check_feasible_boundary_is_feasible():
    limits = Limits()
    state = MachineState(0, 0, 0.2, -0.2)
    assert check_feasible(state, MachineInput(20.0, -20.0), limits) == []


def test_check_feasible_reports_margins():
    limits = Limits()
    out = check_feasible(MachineState(0, 0, 0.2001, 0.0),
                         MachineInput(0.0, 0.0), limits)
    assert len(out) == 1
    assert out[0][0] == "vx"
    assert out[0][1] == pytest.approx(1e-4, abs=1e-12)

    out = check_feasible(MachineState(0, 0, 0, 0),
                         MachineInput(25.0, 0.0), limits)
    assert out == [("ax", pytest.approx(5.0))]


def test_check_feasible_margin_loosens():
    limits = Limits()
    state = MachineState(0, 0, 0.2 + 1e-9, 0.0)
    assert check_feasible(state, MachineInput(0, 0), limits) != []
    assert check_feasible(state, MachineInput(0, 0), limits, margin=1e-8) == []


def test_limits_validation():
    with pytest.raises(ValueError, match="a_max"):
        Limits(a_max=-5.0)
    with pytest.raises(ValueError, match="v_terminal"):
        Limits(v_terminal=0.3)
    defaults = Limits()
    assert (defaults.a_max, defaults.v_max) == (20.0, 0.2)
    assert (defaults.v_terminal, defaults.tolerance) == (2e-3, 20e-6)


def test_state_helpers():
    state = MachineState(1.0, 2.0, 0.3, -0.4)
    assert np.array_equal(state.position, [1.0, 2.0])
    assert state.speed == pytest.approx(0.5)
    assert np.array_equal(state.as_array(), [1.0, 2.0, 0.3, -0.4])
    assert np.array_equal(MachineInput(3.0, 4.0).as_array(), [3.0, 4.0])
