"""The two-stage drop-and-scatter protocol.

Two branches are released from rest at ``(+-delta_x0/2, z0)`` above a
splitting wire at the origin. Each falls, is deflected by about pi/2, flies
out to a side wire at ``(+-x_spl, z_side)``, is turned back towards the axis
and is stopped at its first crossing of ``x = 0`` after that second scattering.

Wire order in every environment built here is ``[split, left, right]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .analytics import current_for_angle, incident_velocity
from .core import (
    BracketError,
    ConvergenceError,
    ParticleSpec,
    PhysicalConstants,
    TopologyError,
    TrajectoryState,
    Vec2,
    Wire,
)
from .dynamics import (
    ClosestApproach,
    IntegratorOptions,
    PlaneCrossingX,
    Trajectory,
    Watch,
    WireDistance,
    gravity_free_velocity,
    integrate,
    turning_angle,
)
from .fields import FieldEnvironment

SPLIT, LEFT, RIGHT = 0, 1, 2


@dataclass(frozen=True)
class ScenarioConfig:
    z0: float = 490e-6
    delta_x0: float = 1e-6
    x_spl: float = 491e-6
    z_side: Optional[float] = -122.6e-6
    I_split: Optional[float] = 6.04138
    I_side: Optional[float] = 10.0
    particle: ParticleSpec = field(default_factory=ParticleSpec)
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    wires_on: bool = True
    gravity_on: bool = True
    wire_radius: float = 0.0
    current_signs: tuple[int, int, int] = (1, 1, 1)
    field_model: str = "independent"
    exit_radius: float = 100e-6
    side_bracket: tuple[float, float] = (5.0, 20.0)
    output_points: int = 2000

    def __post_init__(self):
        if not self.z0 > 0:
            raise ValueError(f"z0 must be positive, got {self.z0}")
        if not self.delta_x0 > 0:
            raise ValueError(f"delta_x0 must be positive, got {self.delta_x0}")
        if not self.x_spl > 0:
            raise ValueError(f"x_spl must be positive, got {self.x_spl}")
        if len(self.current_signs) != 3 or any(s not in (-1, 1) for s in self.current_signs):
            raise ValueError(f"current_signs must be three entries of +-1, got {self.current_signs}")
        object.__setattr__(self, "current_signs", tuple(int(s) for s in self.current_signs))
        object.__setattr__(self, "side_bracket", tuple(float(v) for v in self.side_bracket))

    @property
    def b(self) -> float:
        return self.delta_x0 / 2.0

    @property
    def side_z(self) -> float:
        return ballistic_side_z(self) if self.z_side is None else self.z_side

    @property
    def env_constants(self) -> PhysicalConstants:
        return self.constants.with_chi(self.particle.chi_rho)


@dataclass(frozen=True)
class ScenarioReport:
    max_superposition: float
    t_max_superposition: float
    total_time: float
    closest_approach_split: Optional[float]
    closest_approach_side: Optional[float]
    closure_residual: Optional[float]
    exit_angle_residual: Optional[float]
    first_deflection: Optional[float]
    I_split: float
    I_side: float
    terminated: bool

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProtocolResult:
    left: Trajectory
    right: Trajectory
    report: ScenarioReport
    env: FieldEnvironment
    grid_t: np.ndarray
    grid_dx: np.ndarray

    def __iter__(self):
        return iter((self.left, self.right, self.report))


@dataclass(frozen=True)
class SideCurrentSolution:
    current: float
    residual: float
    verified_residual: float
    evaluations: int


def ballistic_side_z(cfg: ScenarioConfig) -> float:
    """Height at which a horizontal ray leaving the origin at v_in reaches x_spl."""
    return -cfg.x_spl**2 / (4.0 * cfg.z0)


def design_splitting_current(cfg: ScenarioConfig) -> float:
    """Current that deflects a branch released from z0 by pi/2 at impact parameter b."""
    return current_for_angle(math.pi / 2, cfg.b, incident_velocity(cfg.z0, cfg.constants), cfg.env_constants)


def resolved_currents(cfg: ScenarioConfig) -> tuple[float, float]:
    i_split = design_splitting_current(cfg) if cfg.I_split is None else cfg.I_split
    i_side = solve_side_current(cfg).current if cfg.I_side is None else cfg.I_side
    return i_split, i_side


def build_environment(cfg: ScenarioConfig, I_split: float, I_side: float) -> FieldEnvironment:
    consts = cfg.env_constants
    if not cfg.wires_on:
        return FieldEnvironment((), cfg.gravity_on, consts, cfg.field_model)
    s0, s1, s2 = cfg.current_signs
    r = cfg.wire_radius
    zs = cfg.side_z
    wires = (
        Wire(Vec2(0.0, 0.0), s0 * I_split, r),
        Wire(Vec2(-cfg.x_spl, zs), s1 * I_side, r),
        Wire(Vec2(cfg.x_spl, zs), s2 * I_side, r),
    )
    return FieldEnvironment(wires, cfg.gravity_on, consts, cfg.field_model)


def _branch_watchers(env: FieldEnvironment, side: int, exit_radius: float, stop: str):
    if not env.wires:
        return []
    ca_split, ca_side = ClosestApproach(SPLIT), ClosestApproach(side)
    watchers = [
        Watch(ca_split),
        Watch(WireDistance(SPLIT, exit_radius, -1)),
        Watch(WireDistance(SPLIT, exit_radius, +1), armed_by=ca_split),
        Watch(ca_side),
        Watch(WireDistance(side, exit_radius, -1)),
    ]
    side_exit = WireDistance(side, exit_radius, +1)
    watchers.append(Watch(side_exit, terminal=(stop == "side_exit"), armed_by=ca_side))
    if stop == "axis":
        watchers.append(Watch(PlaneCrossingX(0.0), terminal=True, armed_by=ca_side))
    return watchers


def run_branch(cfg: ScenarioConfig, env: FieldEnvironment, sign: int, stop: str = "axis") -> Trajectory:
    """Integrate one branch (`sign` = +1 right, -1 left) from rest.

    `stop` is ``"axis"`` (first x = 0 crossing after the side-wire closest
    approach) or ``"side_exit"`` (leaving `exit_radius` around the side wire).
    """
    side = RIGHT if sign > 0 else LEFT
    init = TrajectoryState(0.0, Vec2(sign * cfg.b, cfg.z0), Vec2(0.0, 0.0))
    return integrate(env, init, cfg.integrator, _branch_watchers(env, side, cfg.exit_radius, stop))


def _scatter_angles(traj: Trajectory, wire: int, exit_radius: float, g: float):
    """(turning angle, exit slope) of the gravity-compensated scattering off `wire`."""
    ca = traj.first_event(ClosestApproach(wire))
    if ca is None:
        return None, None
    enter = traj.first_event(WireDistance(wire, exit_radius, -1))
    leave = traj.first_event(WireDistance(wire, exit_radius, +1))
    if leave is None:
        return None, None
    v_out = gravity_free_velocity(leave.state, ca.t, g)
    if enter is not None:
        v_in = gravity_free_velocity(enter.state, ca.t, g)
    else:
        v_in = Vec2(0.0, -1.0)
    return turning_angle(v_in, v_out), math.atan2(v_out.z, abs(v_out.x))


def exit_angle_residual(traj: Trajectory, side: int, cfg: ScenarioConfig) -> Optional[float]:
    """Slope angle (rad) of the branch velocity right after the side-wire scattering.

    Gravity accumulated since the closest approach is removed so the value
    measures the scattering itself; zero means the branch leaves parallel to x.
    """
    g = cfg.constants.g if cfg.gravity_on else 0.0
    return _scatter_angles(traj, side, cfg.exit_radius, g)[1]


def first_deflection(traj: Trajectory, cfg: ScenarioConfig) -> Optional[float]:
    g = cfg.constants.g if cfg.gravity_on else 0.0
    return _scatter_angles(traj, SPLIT, cfg.exit_radius, g)[0]


def _side_residual(cfg: ScenarioConfig, i_split: float, i_side: float, sign: int) -> float:
    env = build_environment(cfg, i_split, i_side)
    side = RIGHT if sign > 0 else LEFT
    traj = run_branch(cfg, env, sign, stop="side_exit")
    res = exit_angle_residual(traj, side, cfg)
    if res is None:
        raise TopologyError(f"branch {sign:+d} never left the side wire at I_side={i_side:.6g} A")
    return res


def solve_side_current(
    cfg: ScenarioConfig,
    bracket: Optional[tuple[float, float]] = None,
    sign: int = 1,
    tol: float = 1e-4,
    maxiter: int = 100,
) -> SideCurrentSolution:
    """Shoot on the side-wire current so the branch leaves the second scattering horizontally."""
    lo, hi = bracket if bracket is not None else cfg.side_bracket
    i_split = design_splitting_current(cfg) if cfg.I_split is None else cfg.I_split
    calls = 0

    def f(i_side: float) -> float:
        nonlocal calls
        calls += 1
        return _side_residual(cfg, i_split, i_side, sign)

    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        root = lo
    elif f_hi == 0.0:
        root = hi
    elif f_lo * f_hi > 0:
        raise BracketError(
            f"exit-angle residual does not change sign on [{lo}, {hi}] A: "
            f"f({lo})={f_lo:.6g} rad, f({hi})={f_hi:.6g} rad"
        )
    else:
        try:
            root = brentq(f, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=maxiter)
        except RuntimeError as exc:
            raise ConvergenceError(f"side-current solve on [{lo}, {hi}] A failed: {exc}") from exc
    residual = f(root)
    if abs(residual) >= tol:
        raise ConvergenceError(f"residual {residual:.3g} rad at I_side={root:.9g} A exceeds {tol:g}")
    check = _side_residual(cfg, i_split, root, sign)
    return SideCurrentSolution(root, residual, check, calls)


def _delta_x_extremum(left: Trajectory, right: Trajectory, t_end: float, n: int):
    grid = np.linspace(0.0, t_end, n)
    dx = np.array([right.y_at(t)[0] - left.y_at(t)[0] for t in grid])
    i = int(np.argmax(dx))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]
    best_t, best = grid[i], dx[i]
    if hi > lo:
        res = minimize_scalar(
            lambda t: -(right.y_at(t)[0] - left.y_at(t)[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if -res.fun > best:
            best_t, best = float(res.x), float(-res.fun)
    return grid, dx, best_t, best


def _event_distance(traj: Trajectory, env: FieldEnvironment, wire: int) -> Optional[float]:
    ev = traj.first_event(ClosestApproach(wire))
    if ev is None:
        return None
    return (ev.state.pos - env.wires[wire].position).norm()


def run_protocol(cfg: ScenarioConfig) -> ProtocolResult:
    """Simulate both branches and assemble the scenario report."""
    i_split, i_side = resolved_currents(cfg)
    env = build_environment(cfg, i_split, i_side)
    left = run_branch(cfg, env, -1)
    right = run_branch(cfg, env, +1)

    if env.wires:
        for traj, side, name in ((left, LEFT, "left"), (right, RIGHT, "right")):
            if env.wires[side].current != 0 and traj.first_event(ClosestApproach(side)) is None:
                raise TopologyError(f"{name} branch never reached the {name} wire before t={traj.t_end:.6g} s")

    t_common = min(left.t_end, right.t_end)
    grid, dx, t_max, dx_max = _delta_x_extremum(left, right, t_common, cfg.output_points)
    terminated = left.terminated_by is not None and right.terminated_by is not None

    ca_split = ca_side = closure = exit_res = deflection = None
    if env.wires:
        splits = [d for d in (_event_distance(left, env, SPLIT), _event_distance(right, env, SPLIT)) if d is not None]
        sides = [d for d in (_event_distance(left, env, LEFT), _event_distance(right, env, RIGHT)) if d is not None]
        ca_split = min(splits) if splits else None
        ca_side = min(sides) if sides else None
        residuals = [r for r in (exit_angle_residual(left, LEFT, cfg), exit_angle_residual(right, RIGHT, cfg)) if r is not None]
        exit_res = max(residuals, key=abs) if residuals else None
        deflection = first_deflection(right, cfg)
    if terminated:
        closure = (right.final_state.pos - left.final_state.pos).norm()

    report = ScenarioReport(
        max_superposition=dx_max,
        t_max_superposition=t_max,
        total_time=max(left.t_end, right.t_end),
        closest_approach_split=ca_split,
        closest_approach_side=ca_side,
        closure_residual=closure,
        exit_angle_residual=exit_res,
        first_deflection=deflection,
        I_split=i_split,
        I_side=i_side,
        terminated=terminated,
    )
    return ProtocolResult(left, right, report, env, grid, dx)


def amplification_factor(report: ScenarioReport, cfg: ScenarioConfig) -> float:
    return report.max_superposition / cfg.delta_x0


def with_currents(cfg: ScenarioConfig, I_split: float, I_side: float) -> ScenarioConfig:
    return replace(cfg, I_split=I_split, I_side=I_side)
