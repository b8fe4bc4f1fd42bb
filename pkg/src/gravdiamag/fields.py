"""Magnetic field of straight wires and the resulting diamagnetic acceleration.

Two field models are supported:

``"independent"``
    Each wire acts on the particle on its own, ``a = sum_i alpha*I_i**2/r_i**3 e_ri``.
    The potential is ``-chi/(2 mu0) * sum_i |B_i|**2``. This is the single-wire
    law applied wire by wire and is what the reference scenario numbers follow.
``"superposed"``
    The potential uses the magnitude of the vector-summed field,
    ``-chi/(2 mu0) * |sum_i B_i|**2``, which adds wire-wire cross terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .core import PhysicalConstants, SingularityError, TrajectoryState, Vec2, Wire, alpha

FIELD_MODELS = ("independent", "superposed")

AccelFn = Callable[[float, float], "tuple[float, float]"]


@dataclass(frozen=True)
class FieldEnvironment:
    wires: tuple[Wire, ...] = ()
    gravity_on: bool = True
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    model: str = "independent"

    def __post_init__(self):
        object.__setattr__(self, "wires", tuple(self.wires))
        if self.model not in FIELD_MODELS:
            raise ValueError(f"unknown field model {self.model!r}; expected one of {FIELD_MODELS}")
        seen = set()
        for w in self.wires:
            key = (w.position.x, w.position.z)
            if key in seen:
                raise ValueError(f"two wires share the position {key}")
            seen.add(key)

    @property
    def gravity(self) -> float:
        return self.constants.g if self.gravity_on else 0.0

    def with_wires(self, wires: Iterable[Wire]) -> "FieldEnvironment":
        return replace(self, wires=tuple(wires))

    def scaled_currents(self, factor: float) -> "FieldEnvironment":
        return self.with_wires(w.with_current(w.current * factor) for w in self.wires)

    def acceleration_function(self) -> AccelFn:
        """Fast scalar closure ``(x, z) -> (ax, az)`` used by the integrator."""
        return _make_accel(self)


def _offsets(w: Wire, x: float, z: float) -> tuple[float, float, float]:
    dx = x - w.position.x
    dz = z - w.position.z
    r2 = dx * dx + dz * dz
    if r2 == 0.0 or r2 <= w.radius * w.radius:
        raise SingularityError(
            f"point ({x:.6g}, {z:.6g}) is inside wire at "
            f"({w.position.x:.6g}, {w.position.z:.6g}) with radius {w.radius:.3g}"
        )
    return dx, dz, r2


def magnetic_field(env: FieldEnvironment, p: Sequence[float]) -> Vec2:
    """Vector-summed in-plane field (T) of all wires at `p`."""
    x, z = p[0], p[1]
    k = env.constants.mu0 / (2.0 * math.pi)
    bx = bz = 0.0
    for w in env.wires:
        dx, dz, r2 = _offsets(w, x, z)
        c = k * w.current / r2
        bx += c * dz
        bz -= c * dx
    return Vec2(bx, bz)


def _field_and_jacobian(env: FieldEnvironment, x: float, z: float):
    k = env.constants.mu0 / (2.0 * math.pi)
    bx = bz = 0.0
    dbx_dx = dbx_dz = dbz_dx = dbz_dz = 0.0
    for w in env.wires:
        dx, dz, r2 = _offsets(w, x, z)
        c = k * w.current
        r4 = r2 * r2
        bx += c * dz / r2
        bz -= c * dx / r2
        dbx_dx += c * (-2.0 * dx * dz) / r4
        dbx_dz += c * (dx * dx - dz * dz) / r4
        dbz_dx -= c * (dz * dz - dx * dx) / r4
        dbz_dz -= c * (-2.0 * dx * dz) / r4
    return bx, bz, dbx_dx, dbx_dz, dbz_dx, dbz_dz


def b_squared(env: FieldEnvironment, p: Sequence[float]) -> float:
    """|B_total|^2 of the vector-summed field (T^2)."""
    b = magnetic_field(env, p)
    return b.x * b.x + b.z * b.z


def b_squared_gradient(env: FieldEnvironment, p: Sequence[float]) -> Vec2:
    """Analytic gradient of |B_total|^2 (T^2/m), cross terms included."""
    bx, bz, a, b, c, d = _field_and_jacobian(env, p[0], p[1])
    return Vec2(2.0 * (bx * a + bz * c), 2.0 * (bx * b + bz * d))


def effective_b_squared(env: FieldEnvironment, p: Sequence[float]) -> float:
    """The |B|^2 that enters the potential under the environment's field model."""
    if env.model == "superposed":
        return b_squared(env, p)
    k = env.constants.mu0 / (2.0 * math.pi)
    total = 0.0
    for w in env.wires:
        _, _, r2 = _offsets(w, p[0], p[1])
        total += (k * w.current) ** 2 / r2
    return total


def acceleration(env: FieldEnvironment, p: Sequence[float]) -> Vec2:
    """Acceleration (m/s^2) at `p`. Takes no mass: the motion is mass independent."""
    ax, az = _make_accel(env)(p[0], p[1])
    return Vec2(ax, az)


def potential_per_mass(env: FieldEnvironment, p: Sequence[float]) -> float:
    """U/m in J/kg, with the zero of gravitational energy at z = 0."""
    c = env.constants
    return -c.chi_rho / (2.0 * c.mu0) * effective_b_squared(env, p) + env.gravity * p[1]


def energy_per_mass(env: FieldEnvironment, state: TrajectoryState) -> float:
    v = state.vel
    return 0.5 * (v.x * v.x + v.z * v.z) + potential_per_mass(env, state.pos)


def _make_accel(env: FieldEnvironment) -> AccelFn:
    g = env.gravity
    if env.model == "superposed":
        coef = env.constants.chi_rho / (2.0 * env.constants.mu0)

        def accel_superposed(x: float, z: float) -> tuple[float, float]:
            bx, bz, a, b, c, d = _field_and_jacobian(env, x, z)
            return 2.0 * coef * (bx * a + bz * c), 2.0 * coef * (bx * b + bz * d) - g

        return accel_superposed

    al = alpha(env.constants)
    table = tuple(
        (w.position.x, w.position.z, al * w.current * w.current, w.radius * w.radius, w)
        for w in env.wires
    )

    def accel_independent(x: float, z: float) -> tuple[float, float]:
        ax = 0.0
        az = -g
        for wx, wz, s, rad2, w in table:
            dx = x - wx
            dz = z - wz
            r2 = dx * dx + dz * dz
            if r2 <= rad2 or r2 == 0.0:
                _offsets(w, x, z)
            f = s / (r2 * r2)
            ax += f * dx
            az += f * dz
        return ax, az

    return accel_independent
