"""Closed-form results for the drop-and-scatter scheme.

Covers the free-fall stage, single-wire scattering in the 1/r^2 repulsive
potential, the timing of the two-stage protocol, wire current densities,
the spin-gradient initial splitting and wave-packet width estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .core import PhysicalConstants, alpha

DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class ScatteringInput:
    current: float
    impact_parameter: float
    incident_speed: float

    def __post_init__(self):
        if self.current < 0 or self.impact_parameter <= 0 or self.incident_speed <= 0:
            raise ValueError(
                "scattering input needs current >= 0, impact parameter > 0 and incident speed > 0"
            )


@dataclass(frozen=True)
class WavePacketModel:
    mass: float
    trap_omega: float
    initial_width: float
    initial_momentum_width: float

    @classmethod
    def ground_state(cls, mass: float, trap_omega: float, constants=DEFAULT_CONSTANTS):
        dx, dp = trap_ground_widths(mass, trap_omega, constants)
        return cls(mass, trap_omega, dx, dp)


@dataclass(frozen=True)
class NVModel:
    mass: float
    gradient: float
    constants: PhysicalConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        if self.gradient < 0:
            raise ValueError(f"field gradient must be >= 0, got {self.gradient}")


class TimeBreakdown(NamedTuple):
    t1: float
    t2: float
    t3: float
    total: float


def _nonnegative(name: str, value: float):
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")


def incident_velocity(z0: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Speed after falling from rest through height `z0`."""
    _nonnegative("z0", z0)
    return math.sqrt(2.0 * constants.g * z0)


def fall_time(z0: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    _nonnegative("z0", z0)
    return math.sqrt(2.0 * z0 / constants.g)


def k_parameter(s: ScatteringInput, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """``1 + alpha I^2/(v^2 b^2)``; equals (r_min/b)^2 for the 1/r^2 potential."""
    return 1.0 + alpha(constants) * s.current**2 / (s.incident_speed**2 * s.impact_parameter**2)


def scattering_angle_from_k(k: float) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return (1.0 - 1.0 / math.sqrt(k)) * math.pi


def scattering_angle(s: ScatteringInput, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Asymptotic deflection angle (rad) off a single wire, in [0, pi)."""
    return scattering_angle_from_k(k_parameter(s, constants))


def closest_approach_distance(s: ScatteringInput, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Turning-point radius ``b*sqrt(k)`` of the unperturbed scattering orbit."""
    return s.impact_parameter * math.sqrt(k_parameter(s, constants))


def current_for_angle(
    theta: float, b: float, v_in: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Wire current giving deflection `theta` for impact parameter `b` and speed `v_in`."""
    if not 0.0 <= theta < math.pi:
        raise ValueError(f"scattering angle must lie in [0, pi), got {theta}")
    k = (1.0 - theta / math.pi) ** -2
    return v_in * b * math.sqrt((k - 1.0) / alpha(constants))


def time_breakdown(z0: float, x_spl: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> TimeBreakdown:
    """Fall, splitting-to-side and side-to-axis times for the ideal two-stage path."""
    if z0 <= 0 or x_spl < 0:
        raise ValueError(f"need z0 > 0 and x_spl >= 0, got z0={z0}, x_spl={x_spl}")
    g = constants.g
    t1 = fall_time(z0, constants)
    v = incident_velocity(z0, constants)
    t2 = x_spl / v
    t3 = x_spl / math.sqrt(v * v + (g * t2) ** 2)
    return TimeBreakdown(t1, t2, t3, t1 + t2 + t3)


def total_time(z0: float, x_spl: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    if z0 <= 0 or x_spl < 0:
        raise ValueError(f"need z0 > 0 and x_spl >= 0, got z0={z0}, x_spl={x_spl}")
    return math.sqrt(2 * z0 / constants.g) * (
        1.0 + x_spl / (2 * z0) + x_spl / math.sqrt(4 * z0 * z0 + x_spl * x_spl)
    )


class SideScattering(NamedTuple):
    speed: float
    angle: float
    k: float
    impact_parameter: float
    closest_approach: float


def side_scattering(
    z0: float,
    x_spl: float,
    current: float,
    theta: Optional[float] = None,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> SideScattering:
    """Second scattering on the ideal path, solved for the impact parameter.

    The branch arrives with speed ``hypot(v_in, g*t2)``. Leaving parallel to
    the x axis needs ``theta = pi - atan(g*t2/v_in)``, which is used when
    `theta` is omitted. The impact parameter then follows from inverting k.
    """
    tb = time_breakdown(z0, x_spl, constants)
    v = incident_velocity(z0, constants)
    vz = constants.g * tb.t2
    speed = math.hypot(v, vz)
    if theta is None:
        theta = math.pi - math.atan2(vz, v)
    if not 0.0 < theta < math.pi:
        raise ValueError(f"scattering angle must lie in (0, pi), got {theta}")
    k = (1.0 - theta / math.pi) ** -2
    b = current * math.sqrt(alpha(constants) / (k - 1.0)) / speed
    return SideScattering(speed, theta, k, b, b * math.sqrt(k))


def current_density(current: float, d: float) -> float:
    """Current density (A/m^2) of a wire of radius `d` carrying `current`."""
    if d <= 0:
        raise ValueError(f"wire radius must be positive, got {d}")
    return current / (math.pi * d * d)


def current_density_from_scattering(
    s: ScatteringInput, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Density when the wire radius equals the closest approach, written via C = I/b."""
    c = s.current / s.impact_parameter
    v2 = s.incident_speed**2
    return c * v2 / (s.impact_parameter * math.pi * (v2 + alpha(constants) * c * c))


def current_density_right_angle(
    b: float, v_in: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Density needed for a pi/2 deflection; linear in `v_in`, inverse in `b`."""
    if b <= 0 or v_in < 0:
        raise ValueError(f"need b > 0 and v_in >= 0, got b={b}, v_in={v_in}")
    return math.sqrt(3.0 / alpha(constants)) * v_in / (4.0 * b * math.pi)


def nv_angular_frequency(nv: NVModel) -> float:
    c = nv.constants
    return math.sqrt(-c.chi_rho / c.mu0) * nv.gradient


def nv_initial_separation(nv: NVModel, t: float) -> float:
    """Signed spin-state separation after time `t` in a linear field B = eta*x."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    c = nv.constants
    pref = 2.0 * c.g_s * c.mu_B * c.mu0 / (-c.chi_rho) / (nv.mass * nv.gradient)
    return pref * (math.cos(nv_angular_frequency(nv) * t) - 1.0)


def nv_max_separation(nv: NVModel, t_max: float) -> float:
    """max |D(t)| on [0, t_max]; the first extremum sits at omega*t = pi."""
    w = nv_angular_frequency(nv)
    t_peak = math.pi / w if w > 0 else math.inf
    return abs(nv_initial_separation(nv, min(t_max, t_peak)))


def nv_spin_acceleration(nv: NVModel) -> tuple[float, float]:
    """Accelerations of the |+1> and |-1> spin states (m/s^2)."""
    c = nv.constants
    a = c.g_s * c.mu_B * nv.gradient / nv.mass
    return -a, a


def trap_ground_widths(
    mass: float, omega: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> tuple[float, float]:
    """Position and momentum widths of a harmonic ground state (omega in rad/s)."""
    if mass <= 0 or omega <= 0:
        raise ValueError("mass and omega must be positive")
    hb = constants.hbar
    return math.sqrt(hb / (2 * mass * omega)), math.sqrt(hb * mass * omega / 2)


def free_spread_width(
    width0: float, mass: float, t: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Width of a freely evolving Gaussian packet after time `t`."""
    if width0 <= 0 or mass <= 0 or t < 0:
        raise ValueError("need width0 > 0, mass > 0 and t >= 0")
    spread = constants.hbar * t / (2 * mass * width0)
    return math.sqrt(width0 * width0 + spread * spread)


def scattering_velocity_kick(
    s: ScatteringInput, r_ref: float = 1e-6, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Velocity change over the scattering time b/v_in at distance `r_ref` from the wire."""
    a_dia = alpha(constants) * s.current**2 / r_ref**3
    return a_dia * s.impact_parameter / s.incident_speed


def min_width_after_scattering(
    mass: float, dv: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    if mass <= 0 or dv <= 0:
        raise ValueError("mass and velocity spread must be positive")
    return constants.hbar / (2 * mass * dv)
