"""Propagation of wire-current errors through the two scatterings.

The analytic part treats each branch as straight segments of length L joined
at the two wires; the Monte Carlo part re-integrates the protocol with every
wire current scaled by ``1 + offset``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .analytics import scattering_angle_from_k
from .core import TopologyError
from .protocol import ScenarioConfig, build_environment, resolved_currents, run_branch

DISTRIBUTIONS = ("uniform", "gaussian", "fixed")


def beta_coefficient(k: float) -> float:
    """Sensitivity I*d(theta)/dI of the scattering angle, ``(k-1)*pi/k**1.5``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return (k - 1.0) * math.pi / k**1.5


def k_from_angle(theta: float) -> float:
    if not 0.0 <= theta < math.pi:
        raise ValueError(f"scattering angle must lie in [0, pi), got {theta}")
    return (1.0 - theta / math.pi) ** -2


@dataclass(frozen=True)
class SegmentedPath:
    L: float
    b: float
    beta1: float = 3 * math.pi / 8
    beta2: float = 15 * math.pi / 64

    def __post_init__(self):
        if not (self.L > 0 and self.b > 0):
            raise ValueError(f"need L > 0 and b > 0, got L={self.L}, b={self.b}")

    @classmethod
    def from_angles(cls, L: float, b: float, theta1: float = math.pi / 2, theta2: float = 3 * math.pi / 4):
        return cls(L, b, beta_coefficient(k_from_angle(theta1)), beta_coefficient(k_from_angle(theta2)))


@dataclass(frozen=True)
class FluctuationSpec:
    relative_sigma: float = 1e-9
    samples: int = 64
    seed: int = 0
    distribution: str = "uniform"

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.relative_sigma < 0:
            raise ValueError(f"relative_sigma must be >= 0, got {self.relative_sigma}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")


class DeltaTheta(NamedTuple):
    total: float
    from_current: float
    from_impact: float


def delta_theta(dI_rel: float, db_rel: float, beta: float) -> DeltaTheta:
    from_current = beta * dI_rel
    from_impact = -beta * db_rel
    return DeltaTheta(from_current + from_impact, from_current, from_impact)


def first_deviation(dI_rel: float, path: SegmentedPath) -> float:
    """Transverse offset at the second wire caused by the first scattering."""
    return path.beta1 * dI_rel * path.L


def second_deviation(dI_rel: float, path: SegmentedPath) -> float:
    """Leading-order offset at the end of the third segment; requires L/b >= 100."""
    if path.L / path.b < 100:
        raise ValueError(f"L/b = {path.L / path.b:.3g} is below 100; the leading-order estimate does not apply")
    return -path.beta1 * path.beta2 * dI_rel * path.L**2 / path.b


def current_limit(target_db2: float, path: SegmentedPath) -> float:
    """Largest |dI/I| keeping the final offset below `target_db2`."""
    if target_db2 <= 0:
        raise ValueError(f"target deviation must be positive, got {target_db2}")
    return path.b * target_db2 / (path.beta1 * path.beta2 * path.L**2)


def current_fluctuation_curve(path: SegmentedPath, deviations: Sequence[float]) -> list[tuple[float, float]]:
    """(deviation, tolerated |dI/I|) pairs for plotting the stability requirement."""
    return [(d, current_limit(d, path)) for d in deviations]


def protocol_path_length(cfg: ScenarioConfig) -> float:
    """Straight-line distance from the splitting wire to a side wire."""
    return math.hypot(cfg.x_spl, cfg.side_z)


def scattering_betas(k_values: Sequence[float]) -> list[tuple[float, float, float]]:
    return [(k, scattering_angle_from_k(k), beta_coefficient(k)) for k in k_values]


# -- Monte Carlo ----------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloResult:
    offsets: tuple[float, ...]
    deviations: tuple[float, ...]
    baseline_z: float
    baseline_t: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.deviations))

    @property
    def sd(self) -> float:
        return float(np.std(self.deviations, ddof=1)) if len(self.deviations) > 1 else 0.0

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.deviations)))

    def summary(self) -> dict:
        return {
            "samples": len(self.deviations),
            "mean": self.mean,
            "sd": self.sd,
            "mean_abs": self.mean_abs,
            "baseline_terminal_z": self.baseline_z,
            "baseline_terminal_t": self.baseline_t,
        }


def draw_offsets(fluct: FluctuationSpec) -> list[float]:
    """One static relative offset per sample, each from its own child seed."""
    children = np.random.SeedSequence(fluct.seed).spawn(fluct.samples)
    out = []
    for child in children:
        rng = np.random.default_rng(child)
        if fluct.distribution == "fixed":
            out.append(fluct.relative_sigma)
        elif fluct.distribution == "gaussian":
            out.append(float(rng.normal(0.0, fluct.relative_sigma)))
        else:
            out.append(float(rng.uniform(-fluct.relative_sigma, fluct.relative_sigma)))
    return out


def _terminal(cfg: ScenarioConfig, i_split: float, i_side: float, scale: float) -> tuple[float, float]:
    env = build_environment(cfg, i_split * scale, i_side * scale)
    traj = run_branch(cfg, env, +1)
    if traj.terminated_by is None:
        raise TopologyError(f"branch did not return to the axis with currents scaled by 1{scale - 1:+.3g}")
    end = traj.final_state
    return end.pos.z, end.t


def _sample(args) -> float:
    cfg, i_split, i_side, offset, z_ref = args
    z, _ = _terminal(cfg, i_split, i_side, 1.0 + offset)
    return z - z_ref


def monte_carlo_deviation(cfg: ScenarioConfig, fluct: FluctuationSpec, workers: int = 1) -> MonteCarloResult:
    """Signed shift of the right branch's axis-crossing height under current offsets.

    Every wire current is multiplied by ``1 + offset`` for a whole run. The
    left branch is the mirror image and is not re-integrated. Results depend
    only on ``fluct.seed``, not on `workers`.
    """
    i_split, i_side = resolved_currents(cfg)
    z_ref, t_ref = _terminal(cfg, i_split, i_side, 1.0)
    offsets = draw_offsets(fluct)
    jobs = [(cfg, i_split, i_side, off, z_ref) for off in offsets]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            devs = list(pool.map(_sample, jobs))
    else:
        devs = [_sample(j) for j in jobs]
    return MonteCarloResult(tuple(offsets), tuple(devs), z_ref, t_ref)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_response(cfg: ScenarioConfig, offsets: Sequence[float]) -> tuple[list[float], LinearFit]:
    """Deviation for each fixed offset plus a least-squares line through them."""
    i_split, i_side = resolved_currents(cfg)
    z_ref, _ = _terminal(cfg, i_split, i_side, 1.0)
    devs = [_sample((cfg, i_split, i_side, off, z_ref)) for off in offsets]
    x = np.asarray(offsets, float)
    y = np.asarray(devs, float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return devs, LinearFit(float(slope), float(intercept), r2)
