import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import numeric_deflection
from gravdiamag.analytics import ScatteringInput, closest_approach_distance, k_parameter
from gravdiamag.core import NoApproachError, PhysicalConstants, SingularityError, StepFailureError, TrajectoryState, Vec2, Wire
from gravdiamag.dynamics import (
    ClosestApproach,
    IntegratorOptions,
    PlaneCrossingX,
    PlaneCrossingZ,
    VelocityHorizontal,
    Watch,
    closest_approach,
    closest_approach_time,
    energy_series,
    gravity_free_velocity,
    integrate,
    turning_angle,
)
from gravdiamag.fields import FieldEnvironment

G = PhysicalConstants().g
ALPHA = PhysicalConstants().alpha


def lone_wire(current, gravity=False):
    return FieldEnvironment((Wire(Vec2(0.0, 0.0), current),), gravity_on=gravity)


def test_free_fall_is_exact_and_dense_output_too():
    init = TrajectoryState(0.0, Vec2(0.0, 1e-3), Vec2(0.02, 0.0))
    traj = integrate(FieldEnvironment(()), init, IntegratorOptions(max_time=0.01))
    assert traj.t_end == pytest.approx(0.01, abs=1e-15)
    for t in np.linspace(0.0, 0.01, 37):
        y = traj.y_at(t)
        assert y[0] == pytest.approx(0.02 * t, abs=1e-15)
        assert y[1] == pytest.approx(1e-3 - 0.5 * G * t * t, abs=1e-15)
        assert y[3] == pytest.approx(-G * t, abs=1e-13)


def test_plane_crossing_event_time():
    init = TrajectoryState(0.0, Vec2(0.0, 490e-6), Vec2(0.0, 0.0))
    traj = integrate(FieldEnvironment(()), init, IntegratorOptions(), [Watch(PlaneCrossingZ(0.0), terminal=True)])
    assert traj.terminated_by == PlaneCrossingZ(0.0)
    assert traj.t_end == pytest.approx(0.01, abs=1e-12)
    assert traj.final_state.pos.z == pytest.approx(0.0, abs=1e-15)


def test_velocity_horizontal_at_apex():
    init = TrajectoryState(0.0, Vec2(0.0, 0.0), Vec2(0.0, 0.049))
    traj = integrate(FieldEnvironment(()), init, IntegratorOptions(max_time=0.01), [VelocityHorizontal()])
    (ev,) = traj.events_of(VelocityHorizontal())
    assert ev.t == pytest.approx(0.049 / G, abs=1e-12)


def test_armed_watch_ignores_earlier_crossings():
    # x oscillates through 0 twice under a lone wire; the armed watch fires only after the first ever closest approach
    init = TrajectoryState(0.0, Vec2(1e-6, 100e-6), Vec2(0.0, -0.05))
    ca = ClosestApproach(0)
    axis = PlaneCrossingX(0.0)
    traj = integrate(lone_wire(2.0), init, IntegratorOptions(max_time=0.004), [Watch(ca), Watch(axis, armed_by=ca)])
    assert traj.events_of(axis) == []


def test_max_time_without_terminal_event():
    init = TrajectoryState(0.0, Vec2(0.0, 1.0), Vec2(0.0, 0.0))
    traj = integrate(FieldEnvironment(()), init, IntegratorOptions(max_time=0.003))
    assert traj.terminated_by is None
    assert traj.t_end == pytest.approx(0.003, rel=1e-14)


def test_closest_approach_matches_turning_point_formula():
    b, v, k = 0.5e-6, 0.098, 4.0
    current = v * b * math.sqrt((k - 1) / ALPHA)
    theta, traj = numeric_deflection(current, b, v)
    r_min = closest_approach(traj, Wire(Vec2(0, 0), current))
    # launching at 1000 b leaves a residual potential of order (k-1)/2 * 1e-6 of the kinetic energy
    assert r_min == pytest.approx(closest_approach_distance(ScatteringInput(current, b, v)), rel=1e-5)
    t_ca = closest_approach_time(traj, Wire(Vec2(0, 0), current))
    assert traj.first_event(ClosestApproach(0)).t == pytest.approx(t_ca, abs=1e-9)


def test_no_approach_raises():
    init = TrajectoryState(0.0, Vec2(1e-3, 0.0), Vec2(0.01, 0.0))
    traj = integrate(FieldEnvironment((), gravity_on=False), init, IntegratorOptions(max_time=0.01))
    with pytest.raises(NoApproachError):
        closest_approach(traj, Wire(Vec2(0, 0), 1.0))


def test_singularity_propagates():
    init = TrajectoryState(0.0, Vec2(0.0, 0.0), Vec2(0.0, 0.0))
    with pytest.raises(SingularityError):
        integrate(lone_wire(1.0), init)


def test_step_budget_exhaustion():
    init = TrajectoryState(0.0, Vec2(0.0, 1.0), Vec2(0.0, 0.0))
    with pytest.raises(StepFailureError):
        integrate(FieldEnvironment(()), init, IntegratorOptions(max_step=1e-6, max_time=1.0, max_steps=10))


def test_options_validation():
    with pytest.raises(ValueError):
        IntegratorOptions(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorOptions(max_step=-1.0)


def test_fifth_order_convergence_on_scattering():
    # fixed steps (tolerances so loose every step is accepted), final-state error vs a tight reference
    b, v = 1e-6, 0.1
    current = v * b * math.sqrt(3.0 / ALPHA)
    env = lone_wire(current)
    init = TrajectoryState(0.0, Vec2(b, 10 * b), Vec2(0.0, -v))
    T = 20 * b / v
    ref = integrate(env, init, IntegratorOptions(rel_tol=1e-13, abs_tol=1e-22, max_step=math.inf, max_time=T)).final_state
    ns = np.array([50, 100, 200, 400])
    errs = []
    for n in ns:
        traj = integrate(env, init, IntegratorOptions(rel_tol=1e6, abs_tol=1e6, max_step=T / n, max_time=T))
        errs.append((traj.final_state.pos - ref.pos).norm())
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert 4.5 < slope < 5.5


def test_adaptive_error_shrinks_with_tolerance():
    b, v = 1e-6, 0.1
    current = v * b * math.sqrt(3.0 / ALPHA)
    errs = []
    for tol in (1e-6, 1e-8, 1e-10):
        theta, _ = numeric_deflection(current, b, v, IntegratorOptions(rel_tol=tol, abs_tol=tol * 1e-9, max_step=math.inf, max_time=1.0))
        errs.append(abs(theta - math.pi / 2))
    assert errs[0] > errs[1] > errs[2]


@settings(max_examples=15, deadline=None)
@given(st.floats(1.2, 25.0), st.floats(0.03, 0.3), st.booleans())
def test_energy_conserved_in_scattering(k, v, gravity):
    b = 0.5e-6
    current = v * b * math.sqrt((k - 1) / ALPHA)
    env = lone_wire(current, gravity)
    init = TrajectoryState(0.0, Vec2(b, 200 * b), Vec2(0.0, -v))
    traj = integrate(env, init, IntegratorOptions(max_time=400 * b / v))
    e = energy_series(env, traj)
    assert np.max(np.abs(e - e[0])) / np.max(np.abs(e)) < 1e-8


def test_gravity_free_velocity_and_turning_angle():
    s = TrajectoryState(0.3, Vec2(0, 0), Vec2(1.0, -G * 0.1))
    assert gravity_free_velocity(s, 0.2, G) == pytest.approx(Vec2(1.0, 0.0), abs=1e-15)
    assert turning_angle((0, -1), (1, 0)) == pytest.approx(math.pi / 2)
    assert turning_angle((1, 0), (-1, 1e-300)) == pytest.approx(math.pi)


def test_sample_grid_is_fixed_size():
    init = TrajectoryState(0.0, Vec2(0.0, 1.0), Vec2(0.0, 0.0))
    traj = integrate(FieldEnvironment(()), init, IntegratorOptions(max_time=0.01))
    t, y = traj.sample(2000)
    assert t.shape == (2000,) and y.shape == (2000, 4)
    with pytest.raises(ValueError):
        traj.y_at(0.02)
