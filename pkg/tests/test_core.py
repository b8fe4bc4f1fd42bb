import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gravdiamag.core import ParticleSpec, PhysicalConstants, TrajectoryState, Vec2, Wire, alpha

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_alpha_matches_hand_value():
    # chi*mu0/(4 pi^2) with mu0 = 4 pi 1e-7 collapses to chi*1e-7/pi
    assert alpha(PhysicalConstants()) == pytest.approx(6.2e-9 * 1e-7 / math.pi, rel=1e-14)
    assert PhysicalConstants().alpha == pytest.approx(1.97352e-16, rel=1e-5)


def test_alpha_scales_with_susceptibility():
    c = PhysicalConstants()
    assert c.with_chi(2 * c.chi_rho).alpha == pytest.approx(2 * c.alpha)
    assert c.with_chi(0.0).alpha == 0.0


@pytest.mark.parametrize("kwargs", [{"mu0": 0.0}, {"g": -1.0}, {"chi_rho": 1e-9}])
def test_constants_reject_unphysical(kwargs):
    with pytest.raises(ValueError):
        PhysicalConstants(**kwargs)


def test_particle_validation():
    with pytest.raises(ValueError):
        ParticleSpec(mass=0.0)
    with pytest.raises(ValueError):
        ParticleSpec(chi_rho=0.0)


def test_wire_normalises_position_and_rejects_negative_radius():
    w = Wire((1.0, 2.0), 3.0)
    assert isinstance(w.position, Vec2)
    assert w.with_current(-1.0).current == -1.0
    with pytest.raises(ValueError):
        Wire(Vec2(0, 0), 1.0, radius=-1e-6)


@given(finite, finite, finite, finite)
def test_vec2_algebra(ax, az, bx, bz):
    a, b = Vec2(ax, az), Vec2(bx, bz)
    assert (a + b) - b == pytest.approx(a, abs=1e-9)
    assert a.dot(b) == pytest.approx(b.dot(a))
    assert (-a).norm() == a.norm()
    assert (a * 2.0).norm() == pytest.approx(2 * a.norm())


def test_vec2_angle():
    assert Vec2(0.0, 1.0).angle() == pytest.approx(math.pi / 2)


@given(finite, finite, finite, finite, finite)
def test_state_array_round_trip(t, x, z, vx, vz):
    s = TrajectoryState(t, Vec2(x, z), Vec2(vx, vz))
    assert TrajectoryState.from_array(t, s.as_tuple()) == s
