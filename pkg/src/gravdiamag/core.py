"""Shared value types, physical constants and error classes.

Everything is SI internally: metres, seconds, kilograms, amperes, tesla.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple


class GravDiamagError(Exception):
    """Base class for all errors raised by this package."""


class SingularityError(GravDiamagError):
    """A field was evaluated at (or inside the exclusion radius of) a wire."""


class StepFailureError(GravDiamagError):
    """The adaptive integrator could not meet its tolerances."""


class NoApproachError(GravDiamagError):
    """A trajectory never has a local minimum of distance to a wire."""


class TopologyError(GravDiamagError):
    """A protocol branch did not follow the expected scattering sequence."""


class BracketError(GravDiamagError):
    """A root-finding bracket does not straddle a sign change."""


class ConvergenceError(GravDiamagError):
    """An iterative solver ran out of iterations."""


class Vec2(NamedTuple):
    """Planar vector in the x-z plane; gravity acts along -z."""

    x: float
    z: float

    def __add__(self, other):  # type: ignore[override]
        return Vec2(self.x + other[0], self.z + other[1])

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.z - other[1])

    def __mul__(self, s):  # type: ignore[override]
        return Vec2(self.x * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self):
        return Vec2(-self.x, -self.z)

    def dot(self, other) -> float:
        return self.x * other[0] + self.z * other[1]

    def norm(self) -> float:
        return math.hypot(self.x, self.z)

    def angle(self) -> float:
        """Polar angle measured from +x towards +z, in (-pi, pi]."""
        return math.atan2(self.z, self.x)


@dataclass(frozen=True)
class PhysicalConstants:
    mu0: float = 4e-7 * math.pi
    g: float = 9.8
    chi_rho: float = -6.2e-9
    hbar: float = 1.054571817e-34
    g_s: float = 2.0
    mu_B: float = 9.2740100783e-24

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if self.chi_rho > 0:
            raise ValueError(f"chi_rho must be <= 0 (diamagnetic), got {self.chi_rho}")

    @property
    def alpha(self) -> float:
        return alpha(self)

    def with_chi(self, chi_rho: float) -> "PhysicalConstants":
        return replace(self, chi_rho=chi_rho)


def alpha(constants: PhysicalConstants) -> float:
    """Diamagnetic coupling -chi_rho*mu0/(4 pi^2), so that a single wire
    accelerates the particle by alpha*I^2/r^3 radially outward."""
    return -constants.chi_rho * constants.mu0 / (4.0 * math.pi**2)


@dataclass(frozen=True)
class Wire:
    """Infinite straight wire along y, piercing the x-z plane at `position`.

    The sign of `current` gives the direction along +y (positive) or -y.
    `radius` is an exclusion radius; fields are undefined inside it.
    """

    position: Vec2
    current: float
    radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", Vec2(*self.position))
        if self.radius < 0:
            raise ValueError(f"wire radius must be >= 0, got {self.radius}")

    def with_current(self, current: float) -> "Wire":
        return replace(self, current=current)


@dataclass(frozen=True)
class ParticleSpec:
    mass: float = 1e-15
    chi_rho: float = -6.2e-9

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.chi_rho < 0:
            raise ValueError(f"chi_rho must be negative, got {self.chi_rho}")


class TrajectoryState(NamedTuple):
    t: float
    pos: Vec2
    vel: Vec2

    @classmethod
    def from_array(cls, t: float, y) -> "TrajectoryState":
        return cls(float(t), Vec2(float(y[0]), float(y[1])), Vec2(float(y[2]), float(y[3])))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pos.x, self.pos.z, self.vel.x, self.vel.z)
