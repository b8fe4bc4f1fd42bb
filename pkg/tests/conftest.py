import math

import numpy as np
import pytest

from gravdiamag.config import bundled_config_path, load_config
from gravdiamag.core import PhysicalConstants, TrajectoryState, Vec2, Wire
from gravdiamag.dynamics import ClosestApproach, IntegratorOptions, Watch, WireDistance, integrate, turning_angle
from gravdiamag.fields import FieldEnvironment
from gravdiamag.protocol import run_protocol


@pytest.fixture(scope="session")
def reference_config():
    return load_config(bundled_config_path())


@pytest.fixture(scope="session")
def reference_run(reference_config):
    return run_protocol(reference_config.scenario)


def numeric_deflection(current, b, speed, opts=None, constants=PhysicalConstants(), far=1000.0):
    """Deflection off a lone wire at the origin, gravity off.

    The particle starts at (b, far*b) moving straight down and is stopped when
    it leaves the circle of radius far*b again.
    """
    env = FieldEnvironment((Wire(Vec2(0.0, 0.0), current),), gravity_on=False, constants=constants)
    R = far * b
    opts = opts or IntegratorOptions(max_step=math.inf, max_time=100.0 * R / speed)
    init = TrajectoryState(0.0, Vec2(b, R), Vec2(0.0, -speed))
    ca = ClosestApproach(0)
    traj = integrate(env, init, opts, [Watch(ca), Watch(WireDistance(0, R * (1 - 1e-9), +1), terminal=True, armed_by=ca)])
    assert traj.terminated_by is not None, "particle never left the scattering region"
    end = traj.final_state
    return turning_angle((0.0, -speed), end.vel), traj


def random_scattering_inputs(n, seed):
    """(I, b, v, k) with b, v log-uniform and k uniform in [1.1, 30]."""
    rng = np.random.default_rng(seed)
    alpha = PhysicalConstants().alpha
    out = []
    for _ in range(n):
        b = math.exp(rng.uniform(math.log(0.3e-6), math.log(3e-6)))
        v = math.exp(rng.uniform(math.log(0.02), math.log(0.5)))
        k = rng.uniform(1.1, 30.0)
        current = v * b * math.sqrt((k - 1.0) / alpha)
        out.append((current, b, v, k))
    return out


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
