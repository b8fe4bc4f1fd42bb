"""Adaptive integration of x'' = a(x) with dense output and event location.

The stepper is the Dormand-Prince 5(4) embedded pair with Hairer's
fourth-order continuous extension. State vectors are ``(x, z, vx, vz)``.
Events are bracketed per accepted step and refined with Brent's method on
the dense output, so their accuracy does not depend on the step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import NoApproachError, SingularityError, StepFailureError, TrajectoryState, Vec2, Wire
from .fields import FieldEnvironment

State4 = tuple  # (x, z, vx, vz)

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_step: float = 1e-5
    max_time: float = 0.05
    event_time_tol: float = 1e-12
    max_steps: int = 5_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("integrator tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")


# -- event kinds --------------------------------------------------------------


@dataclass(frozen=True)
class ClosestApproach:
    """Local minimum of distance to ``env.wires[wire]``."""

    wire: int

    direction = 1

    def function(self, env: FieldEnvironment):
        wp = env.wires[self.wire].position
        wx, wz = wp.x, wp.z
        return lambda y: (y[0] - wx) * y[2] + (y[1] - wz) * y[3]


@dataclass(frozen=True)
class PlaneCrossingX:
    x0: float
    direction: int = 0

    def function(self, env: FieldEnvironment):
        x0 = self.x0
        return lambda y: y[0] - x0


@dataclass(frozen=True)
class PlaneCrossingZ:
    z0: float
    direction: int = 0

    def function(self, env: FieldEnvironment):
        z0 = self.z0
        return lambda y: y[1] - z0


@dataclass(frozen=True)
class VelocityHorizontal:
    direction: int = 0

    def function(self, env: FieldEnvironment):
        return lambda y: y[3]


@dataclass(frozen=True)
class WireDistance:
    """Distance to ``env.wires[wire]`` crosses `radius`; direction +1 = leaving."""

    wire: int
    radius: float
    direction: int = 0

    def function(self, env: FieldEnvironment):
        wp = env.wires[self.wire].position
        wx, wz, r2 = wp.x, wp.z, self.radius * self.radius
        return lambda y: (y[0] - wx) ** 2 + (y[1] - wz) ** 2 - r2


EventKind = Union[ClosestApproach, PlaneCrossingX, PlaneCrossingZ, VelocityHorizontal, WireDistance]


@dataclass(frozen=True)
class Watch:
    """Request to detect `kind`; `armed_by` delays detection until that kind fired."""

    kind: EventKind
    terminal: bool = False
    armed_by: Optional[EventKind] = None


@dataclass(frozen=True)
class Event:
    kind: EventKind
    t: float
    state: TrajectoryState


# -- trajectory ---------------------------------------------------------------


@dataclass
class Trajectory:
    """Accepted step states plus the dense-output polynomials between them.

    ``dense[i]`` holds the five Hairer coefficient rows for the step that
    starts at ``ts[i]`` with nominal length ``hs[i]``; the final interval may
    be shorter than ``hs[i]`` when a terminal event cut the step.
    """

    ts: np.ndarray
    ys: np.ndarray
    hs: np.ndarray
    dense: np.ndarray
    events: list[Event] = field(default_factory=list)
    terminated_by: Optional[EventKind] = None

    @property
    def t_start(self) -> float:
        return float(self.ts[0])

    @property
    def t_end(self) -> float:
        return float(self.ts[-1])

    @property
    def states(self) -> list[TrajectoryState]:
        return [TrajectoryState.from_array(t, y) for t, y in zip(self.ts, self.ys)]

    @property
    def final_state(self) -> TrajectoryState:
        return TrajectoryState.from_array(self.ts[-1], self.ys[-1])

    def _segment(self, t: float) -> int:
        i = int(np.searchsorted(self.ts, t, side="right")) - 1
        return min(max(i, 0), len(self.hs) - 1)

    def y_at(self, t: float) -> np.ndarray:
        if not (self.ts[0] - 1e-15 <= t <= self.ts[-1] + 1e-15):
            raise ValueError(f"t={t} outside trajectory span [{self.ts[0]}, {self.ts[-1]}]")
        if len(self.hs) == 0:
            return self.ys[0].copy()
        i = self._segment(t)
        th = (t - self.ts[i]) / self.hs[i]
        r = self.dense[i]
        return r[0] + th * (r[1] + (1.0 - th) * (r[2] + th * (r[3] + (1.0 - th) * r[4])))

    def state_at(self, t: float) -> TrajectoryState:
        return TrajectoryState.from_array(t, self.y_at(t))

    def sample(self, n: int = 2000, t_end: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
        """States on a uniform grid of `n` points; returns ``(t, y)`` with y shaped (n, 4)."""
        t1 = self.t_end if t_end is None else t_end
        grid = np.linspace(self.t_start, t1, n)
        return grid, np.array([self.y_at(t) for t in grid])

    def events_of(self, kind: EventKind) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def first_event(self, kind: EventKind) -> Optional[Event]:
        hits = self.events_of(kind)
        return hits[0] if hits else None


# -- integrator ---------------------------------------------------------------


def _rms_error(y0, y1, err, atol, rtol) -> float:
    s = 0.0
    for a, b, e in zip(y0, y1, err):
        sc = atol + rtol * max(abs(a), abs(b))
        s += (e / sc) ** 2
    return math.sqrt(s / 4.0)


def _initial_step(f, y0, k1, atol, rtol, max_step) -> float:
    sc = [atol + rtol * abs(v) for v in y0]
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y0, sc)) / 4)
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(k1, sc)) / 4)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = tuple(a + h0 * b for a, b in zip(y0, k1))
    k2 = f(y1)
    d2 = math.sqrt(sum(((b - a) / s) ** 2 for a, b, s in zip(k1, k2, sc)) / 4) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


def integrate(
    env: FieldEnvironment,
    init: TrajectoryState,
    opts: IntegratorOptions = IntegratorOptions(),
    watchers: Iterable[Union[Watch, EventKind]] = (),
) -> Trajectory:
    """Integrate from `init` until ``opts.max_time`` or a terminal watcher fires.

    Raises SingularityError if a stage lands on a wire (or inside its radius)
    and StepFailureError if the step size underflows.
    """
    accel = env.acceleration_function()

    def f(y):
        ax, az = accel(y[0], y[1])
        return (y[2], y[3], ax, az)

    watches = [w if isinstance(w, Watch) else Watch(w) for w in watchers]
    funcs = [w.kind.function(env) for w in watches]
    fired: set = set()

    t = float(init.t)
    t_stop = t + opts.max_time
    y = tuple(float(v) for v in init.as_tuple())
    rtol, atol = opts.rel_tol, opts.abs_tol

    ts = [t]
    ys = [y]
    hs: list[float] = []
    dense: list[tuple] = []
    events: list[Event] = []
    terminated_by = None

    def armed(i: int) -> bool:
        a = watches[i].armed_by
        return a is None or a in fired

    g_prev = [funcs[i](y) if armed(i) else None for i in range(len(watches))]

    k1 = f(y)
    h = _initial_step(f, y, k1, atol, rtol, opts.max_step)
    rejected = False
    n_steps = 0

    while t < t_stop:
        n_steps += 1
        if n_steps > opts.max_steps:
            raise StepFailureError(f"exceeded {opts.max_steps} steps at t={t:.9g}")
        h = min(h, opts.max_step, t_stop - t)
        if h <= 16 * np.finfo(float).eps * max(abs(t), 1e-30):
            raise StepFailureError(f"step size underflow at t={t:.9g} (h={h:.3g})")

        y2 = tuple(a + h * (A21 * b1) for a, b1 in zip(y, k1))
        k2 = f(y2)
        y3 = tuple(a + h * (A31 * b1 + A32 * b2) for a, b1, b2 in zip(y, k1, k2))
        k3 = f(y3)
        y4 = tuple(a + h * (A41 * b1 + A42 * b2 + A43 * b3) for a, b1, b2, b3 in zip(y, k1, k2, k3))
        k4 = f(y4)
        y5 = tuple(
            a + h * (A51 * b1 + A52 * b2 + A53 * b3 + A54 * b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
        )
        k5 = f(y5)
        y6 = tuple(
            a + h * (A61 * b1 + A62 * b2 + A63 * b3 + A64 * b4 + A65 * b5)
            for a, b1, b2, b3, b4, b5 in zip(y, k1, k2, k3, k4, k5)
        )
        k6 = f(y6)
        y7 = tuple(
            a + h * (A71 * b1 + A73 * b3 + A74 * b4 + A75 * b5 + A76 * b6)
            for a, b1, b3, b4, b5, b6 in zip(y, k1, k3, k4, k5, k6)
        )
        k7 = f(y7)
        err = tuple(
            h * (E1 * b1 + E3 * b3 + E4 * b4 + E5 * b5 + E6 * b6 + E7 * b7)
            for b1, b3, b4, b5, b6, b7 in zip(k1, k3, k4, k5, k6, k7)
        )
        en = _rms_error(y, y7, err, atol, rtol)

        if en > 1.0:
            h *= max(MIN_FACTOR, SAFETY * en ** -0.2)
            rejected = True
            continue

        t_new = t + h
        if t_stop - t_new < 1e-15 * max(1.0, abs(t_stop)):
            t_new = t_stop
        r1 = y
        r2 = tuple(b - a for a, b in zip(y, y7))
        r3 = tuple(h * a - d for a, d in zip(k1, r2))
        r4 = tuple(d - h * b - c for d, b, c in zip(r2, k7, r3))
        r5 = tuple(
            h * (D1 * b1 + D3 * b3 + D4 * b4 + D5 * b5 + D6 * b6 + D7 * b7)
            for b1, b3, b4, b5, b6, b7 in zip(k1, k3, k4, k5, k6, k7)
        )
        coeffs = (r1, r2, r3, r4, r5)

        # event search on [t, t_new]
        cut = None
        if watches:
            cut = _scan_events(
                env, watches, funcs, fired, g_prev, armed, coeffs, t, h, t_new, y7, events, opts
            )
        ts.append(t_new if cut is None else cut[0])
        ys.append(y7 if cut is None else cut[1])
        hs.append(h)
        dense.append(coeffs)
        if cut is not None:
            terminated_by = cut[2]
            break

        t, y, k1 = t_new, y7, k7
        fac = SAFETY * en ** -0.2 if en > 0 else MAX_FACTOR
        fac = min(MAX_FACTOR, max(MIN_FACTOR, fac))
        if rejected:
            fac = min(fac, 1.0)
            rejected = False
        h *= fac

    return Trajectory(
        ts=np.array(ts),
        ys=np.array(ys, dtype=float),
        hs=np.array(hs),
        dense=np.array(dense, dtype=float).reshape(len(hs), 5, 4),
        events=events,
        terminated_by=terminated_by,
    )


def _dense_eval(coeffs, th):
    r1, r2, r3, r4, r5 = coeffs
    u = 1.0 - th
    return tuple(a + th * (b + u * (c + th * (d + u * e))) for a, b, c, d, e in zip(r1, r2, r3, r4, r5))


def _crosses(g0: float, g1: float, direction: int) -> bool:
    if direction > 0:
        return g0 < 0.0 <= g1
    if direction < 0:
        return g0 > 0.0 >= g1
    return (g0 < 0.0 <= g1) or (g0 > 0.0 >= g1)


def _scan_events(env, watches, funcs, fired, g_prev, armed, coeffs, t0, h, t1, y1, events, opts):
    """Record events in (t0, t1]; return (t, y, kind) if a terminal one fires."""
    t_lo = t0
    g_hi = [funcs[i](y1) if armed(i) else None for i in range(len(watches))]
    done: set[int] = set()
    while True:
        best = None
        for i, w in enumerate(watches):
            if i in done or not armed(i) or g_prev[i] is None:
                continue
            d = getattr(w.kind, "direction", 0)
            if not _crosses(g_prev[i], g_hi[i], d):
                continue
            fn = funcs[i]
            if g_hi[i] == 0.0:
                tr = t1
            else:
                tr = brentq(
                    lambda s: fn(_dense_eval(coeffs, (s - t0) / h)),
                    t_lo,
                    t1,
                    xtol=opts.event_time_tol,
                    rtol=4 * np.finfo(float).eps,
                )
            if best is None or tr < best[0]:
                best = (tr, i)
        if best is None:
            break
        tr, i = best
        yr = _dense_eval(coeffs, (tr - t0) / h)
        kind = watches[i].kind
        if isinstance(kind, ClosestApproach):
            w = env.wires[kind.wire]
            if math.hypot(yr[0] - w.position.x, yr[1] - w.position.z) <= w.radius:
                raise SingularityError(
                    f"trajectory entered the exclusion radius of wire {kind.wire} at t={tr:.9g}"
                )
        events.append(Event(kind, tr, TrajectoryState.from_array(tr, yr)))
        fired.add(kind)
        done.add(i)
        if watches[i].terminal:
            return tr, yr, kind
        # re-seed the remaining watchers at the event time; newly armed ones start here
        t_lo = tr
        for j in range(len(watches)):
            if j in done:
                continue
            if armed(j):
                g_prev[j] = funcs[j](yr)
                if g_hi[j] is None:
                    g_hi[j] = funcs[j](y1)
    for j in range(len(watches)):
        g_prev[j] = g_hi[j] if armed(j) else None
        if armed(j) and g_prev[j] is None:
            g_prev[j] = funcs[j](y1)
    return None


# -- trajectory queries -------------------------------------------------------


def closest_approach(traj: Trajectory, wire: Wire) -> float:
    """Smallest local-minimum distance (m) between the trajectory and `wire`.

    Minima are bracketed by sign changes of d/dt |r - r_w|^2 between stored
    states and refined on the dense output. Raises NoApproachError if the
    distance is monotone over the whole span.
    """
    wx, wz = wire.position.x, wire.position.z
    ys, ts = traj.ys, traj.ts
    rdot = (ys[:, 0] - wx) * ys[:, 2] + (ys[:, 1] - wz) * ys[:, 3]
    best = math.inf

    def rdot_at(t):
        y = traj.y_at(t)
        return (y[0] - wx) * y[2] + (y[1] - wz) * y[3]

    idx = np.nonzero((rdot[:-1] < 0) & (rdot[1:] >= 0))[0]
    for i in idx:
        t_ca = ts[i + 1] if rdot[i + 1] == 0 else brentq(rdot_at, ts[i], ts[i + 1], xtol=1e-15)
        y = traj.y_at(t_ca)
        best = min(best, math.hypot(y[0] - wx, y[1] - wz))
    if not math.isfinite(best):
        raise NoApproachError(
            f"distance to wire at ({wx:.6g}, {wz:.6g}) has no interior minimum on "
            f"[{traj.t_start:.6g}, {traj.t_end:.6g}]"
        )
    return best


def closest_approach_time(traj: Trajectory, wire: Wire) -> float:
    wx, wz = wire.position.x, wire.position.z

    def dist(t):
        y = traj.y_at(t)
        return math.hypot(y[0] - wx, y[1] - wz)

    d = np.hypot(traj.ys[:, 0] - wx, traj.ys[:, 1] - wz)
    i = int(np.argmin(d))
    lo, hi = traj.ts[max(i - 1, 0)], traj.ts[min(i + 1, len(traj.ts) - 1)]
    if hi <= lo:
        return float(traj.ts[i])
    res = minimize_scalar(dist, bounds=(lo, hi), method="bounded", options={"xatol": 1e-15})
    return float(res.x)


def gravity_free_velocity(state: TrajectoryState, t_ref: float, g: float) -> Vec2:
    """Velocity with the gravitational change since `t_ref` removed."""
    return Vec2(state.vel.x, state.vel.z + g * (state.t - t_ref))


def turning_angle(v_in: Sequence[float], v_out: Sequence[float]) -> float:
    """Unsigned angle in [0, pi] between two velocity directions."""
    cross = v_in[0] * v_out[1] - v_in[1] * v_out[0]
    dot = v_in[0] * v_out[0] + v_in[1] * v_out[1]
    return abs(math.atan2(cross, dot))


def energy_series(env: FieldEnvironment, traj: Trajectory) -> np.ndarray:
    """Energy per unit mass at every stored state."""
    from .fields import energy_per_mass

    return np.array([energy_per_mass(env, s) for s in traj.states])
