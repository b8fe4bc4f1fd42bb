"""Command-line entry point.

    gravdiamag simulate|design|sensitivity|analytics --config PATH --out DIR [--seed N] [--samples N]

Every command computes all of its results in memory first and only then
writes them, so a failure leaves no partial output. Each output directory
gets a ``manifest.json`` describing the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import analytics as an
from .config import (
    FORMAT_VERSION,
    ConfigError,
    RunConfig,
    SensitivitySettings,
    config_to_dict,
    load_config,
    with_overrides,
)
from .core import GravDiamagError
from .dynamics import ClosestApproach, PlaneCrossingX, VelocityHorizontal, WireDistance, energy_series
from .protocol import (
    LEFT,
    RIGHT,
    amplification_factor,
    build_environment,
    design_splitting_current,
    run_branch,
    run_protocol,
    solve_side_current,
)
from .sensitivity import (
    SegmentedPath,
    current_limit,
    monte_carlo_deviation,
    protocol_path_length,
    second_deviation,
)

log = logging.getLogger("gravdiamag")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4
CSV_SCHEMA_VERSION = 1

CSV_SCHEMAS = {
    "trajectory": ["t", "x", "z", "vx", "vz"],
    "events": ["branch", "event", "wire", "t", "x", "z", "vx", "vz"],
    "superposition": ["t", "delta_x"],
    "overlay": ["branch", "stage", "t", "x", "z"],
    "wires": ["wire", "x", "z", "current"],
    "sensitivity_samples": ["sample", "offset", "deviation"],
    "limits": ["L", "b", "target_deviation", "beta1", "beta2", "current_limit"],
    "fluctuation_curve": ["L", "delta_b2", "current_limit"],
    "nv_separation": ["t", "separation"],
    "wave_packet": ["t", "width"],
}


class Outputs:
    """In-memory bundle of files; written together once a command succeeds."""

    def __init__(self):
        self.files: dict[str, str] = {}
        self.schemas: dict[str, str] = {}

    def csv(self, name: str, schema: str, rows: Iterable[Sequence]):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_SCHEMAS[schema])
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        self.files[name] = buf.getvalue()
        self.schemas[name] = f"{schema}/v{CSV_SCHEMA_VERSION}"

    def json(self, name: str, obj):
        self.files[name] = dumps(obj)

    def write(self, out_dir: Path):
        out_dir.mkdir(parents=True, exist_ok=True)
        with tempfile.TemporaryDirectory(dir=out_dir, prefix=".partial-") as tmp:
            for name, text in self.files.items():
                with open(Path(tmp) / name, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
            for name in self.files:
                os.replace(Path(tmp) / name, out_dir / name)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _clean(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    # repr-based float output is the shortest string that round-trips exactly,
    # which never needs more than 17 significant digits.
    return json.dumps(_clean(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def _manifest(args, cfg: RunConfig, outputs: Outputs) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "command": args.command,
        "config_path": str(Path(args.config).resolve()),
        "output_directory": str(Path(args.out).resolve()),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "csv_schemas": dict(sorted(outputs.schemas.items())),
        "files": sorted(outputs.files),
        "resolved_config": config_to_dict(cfg),
    }


# -- simulate -------------------------------------------------------------------


def _side_ca_time(traj, side) -> float:
    ev = traj.first_event(ClosestApproach(side))
    return ev.t if ev is not None else math.inf


def _event_rows(name, traj):
    for ev in traj.events:
        kind = ev.kind
        wire = getattr(kind, "wire", "")
        label = {
            ClosestApproach: "closest_approach",
            PlaneCrossingX: "axis_crossing",
            VelocityHorizontal: "velocity_horizontal",
        }.get(type(kind))
        if isinstance(kind, WireDistance):
            label = "exit_radius_out" if kind.direction > 0 else "exit_radius_in"
        label = label or type(kind).__name__
        s = ev.state
        yield (name, label, wire, ev.t, s.pos.x, s.pos.z, s.vel.x, s.vel.z)


def simulate(cfg: RunConfig) -> Outputs:
    scen = cfg.scenario
    res = run_protocol(scen)
    out = Outputs()
    n = cfg.outputs.points
    for name, traj in (("left", res.left), ("right", res.right)):
        t, y = traj.sample(n)
        out.csv(f"trajectory_{name}.csv", "trajectory", ((ti, *yi) for ti, yi in zip(t, y)))
    out.csv(
        "events.csv",
        "events",
        [*_event_rows("left", res.left), *_event_rows("right", res.right)],
    )
    out.csv("superposition.csv", "superposition", zip(res.grid_t, res.grid_dx))

    overlay = []
    for name, traj, side in (("left", res.left, LEFT), ("right", res.right, RIGHT)):
        t_ca = _side_ca_time(traj, side) if res.env.wires else math.inf
        t, y = traj.sample(n)
        overlay.extend((name, 1 if ti <= t_ca else 2, ti, yi[0], yi[1]) for ti, yi in zip(t, y))
    out.csv("trajectory_overlay.csv", "overlay", overlay)
    out.csv(
        "wires.csv",
        "wires",
        [(i, w.position.x, w.position.z, w.current) for i, w in enumerate(res.env.wires)],
    )

    drifts = []
    for traj in (res.left, res.right):
        e = energy_series(res.env, traj)
        drifts.append(float(np.max(np.abs(e - e[0])) / max(abs(e[0]), np.max(np.abs(e)))))
    report = res.report.as_dict()
    report["amplification_factor"] = amplification_factor(res.report, scen)
    report["energy_relative_drift"] = max(drifts)
    report["analytic_total_time"] = an.total_time(scen.z0, scen.x_spl, scen.constants)
    out.json("report.json", report)
    return out


# -- design ---------------------------------------------------------------------


def design(cfg: RunConfig) -> tuple[Outputs, bool]:
    """Design currents from geometry alone; configured currents are ignored."""
    scen = cfg.scenario
    limit = cfg.design.max_current_density
    i_split = design_splitting_current(scen)
    v_in = an.incident_velocity(scen.z0, scen.constants)
    split_in = an.ScatteringInput(i_split, scen.b, v_in)
    split_r = an.closest_approach_distance(split_in, scen.env_constants)
    densities = {
        "split_right_angle": an.current_density_right_angle(scen.b, v_in, scen.env_constants),
        "split_closest_approach": an.current_density(i_split, split_r),
    }
    result = {
        "I_split": i_split,
        "I_side": None,
        "exit_angle_residual": None,
        "side_solver_evaluations": None,
        "split_closest_approach": split_r,
        "side_closest_approach": None,
        "current_densities": densities,
        "max_current_density": limit,
        "feasible": None,
    }
    feasible = max(densities.values()) <= limit
    designed = replace(scen, I_split=i_split, I_side=None)
    if feasible:
        sol = solve_side_current(designed)
        env = build_environment(designed, i_split, sol.current)
        traj = run_branch(designed, env, +1, stop="side_exit")
        ev = traj.first_event(ClosestApproach(RIGHT))
        side_r = (ev.state.pos - env.wires[RIGHT].position).norm()
        densities["side_closest_approach"] = an.current_density(sol.current, side_r)
        result.update(
            I_side=sol.current,
            exit_angle_residual=sol.verified_residual,
            side_solver_evaluations=sol.evaluations,
            side_closest_approach=side_r,
        )
        feasible = max(densities.values()) <= limit
        designed = replace(designed, I_side=sol.current)
    result["feasible"] = feasible
    out = Outputs()
    out.json("design.json", result)
    if feasible:
        out.json("designed_config.json", config_to_dict(replace(cfg, scenario=designed)))
    return out, feasible


# -- sensitivity ----------------------------------------------------------------


def sensitivity(cfg: RunConfig) -> Outputs:
    if cfg.fluctuation is None:
        raise ConfigError("fluctuation: section is required for the sensitivity command")
    sens = cfg.sensitivity or SensitivitySettings()
    scen = cfg.scenario
    mc = monte_carlo_deviation(scen, cfg.fluctuation)

    limits, curve, estimates = [], [], []
    lo, hi = sens.curve_range
    targets = np.geomspace(lo, hi, sens.curve_points)
    for L in sens.L_values:
        path = SegmentedPath(L, sens.b)
        limits.append((L, sens.b, sens.target_deviation, path.beta1, path.beta2, current_limit(sens.target_deviation, path)))
        curve.extend((L, d, current_limit(d, path)) for d in targets)
        try:
            est = second_deviation(cfg.fluctuation.relative_sigma, path)
        except ValueError:
            est = None
        estimates.append({"L": L, "second_deviation": est})

    stats = {
        "fluctuation": {
            "relative_sigma": cfg.fluctuation.relative_sigma,
            "samples": cfg.fluctuation.samples,
            "seed": cfg.fluctuation.seed,
            "distribution": cfg.fluctuation.distribution,
        },
        "monte_carlo": mc.summary(),
        "analytic": {
            "protocol_path_length": protocol_path_length(scen),
            "second_deviation_at_sigma": estimates,
        },
        "limits": [dict(zip(CSV_SCHEMAS["limits"], row)) for row in limits],
    }
    out = Outputs()
    out.json("statistics.json", stats)
    out.csv(
        "samples.csv",
        "sensitivity_samples",
        ((i, o, d) for i, (o, d) in enumerate(zip(mc.offsets, mc.deviations))),
    )
    out.csv("limits.csv", "limits", limits)
    out.csv("fluctuation_curve.csv", "fluctuation_curve", curve)
    return out


# -- analytics ------------------------------------------------------------------


def analytics(cfg: RunConfig) -> Outputs:
    scen = cfg.scenario
    consts, env_consts = scen.constants, scen.env_constants
    i_split = scen.I_split if scen.I_split is not None else design_splitting_current(scen)
    v_in = an.incident_velocity(scen.z0, consts)
    tb = an.time_breakdown(scen.z0, scen.x_spl, consts)
    s = an.ScatteringInput(i_split, scen.b, v_in)
    k = an.k_parameter(s, env_consts)
    r_split = an.closest_approach_distance(s, env_consts)
    result = {
        "v_in": v_in,
        "t1": tb.t1,
        "time_breakdown": tb._asdict(),
        "total_time": an.total_time(scen.z0, scen.x_spl, consts),
        "split_scattering": {
            "current": i_split,
            "impact_parameter": scen.b,
            "k": k,
            "theta": an.scattering_angle_from_k(k),
            "closest_approach": r_split,
        },
        "current_densities": {
            "split_right_angle": an.current_density_right_angle(scen.b, v_in, env_consts),
            "split_closest_approach": an.current_density_from_scattering(s, env_consts),
        },
    }
    if scen.I_side is not None:
        side = an.side_scattering(scen.z0, scen.x_spl, scen.I_side, constants=env_consts)
        result["side_scattering"] = {"current": scen.I_side, **side._asdict()}
        result["current_densities"]["side_closest_approach"] = an.current_density(
            scen.I_side, side.closest_approach
        )

    out = Outputs()
    extra = cfg.analytics
    if extra is not None and extra.nv is not None:
        nv = an.NVModel(extra.nv.mass, extra.nv.gradient, consts)
        ts = np.linspace(0.0, extra.nv.t_max, extra.nv.points)
        out.csv("nv_separation.csv", "nv_separation", ((t, an.nv_initial_separation(nv, t)) for t in ts))
        result["nv"] = {
            "angular_frequency": an.nv_angular_frequency(nv),
            "max_separation": an.nv_max_separation(nv, extra.nv.t_max),
            "spin_accelerations": list(an.nv_spin_acceleration(nv)),
        }
    if extra is not None and extra.wave_packet is not None:
        wp = extra.wave_packet
        packet = an.WavePacketModel.ground_state(wp.mass, wp.trap_omega, consts)
        w0 = packet.initial_width if wp.initial_width is None else wp.initial_width
        widths = [(t, an.free_spread_width(w0, wp.mass, t, consts)) for t in wp.times]
        out.csv("wave_packet.csv", "wave_packet", widths)
        kick = an.scattering_velocity_kick(s, wp.r_ref, env_consts)
        result["wave_packet"] = {
            "ground_state_width": packet.initial_width,
            "initial_width": w0,
            "initial_momentum_width": packet.initial_momentum_width,
            "free_spread": [{"t": t, "width": w} for t, w in widths],
            "velocity_kick": kick,
            "min_width_after_scattering": an.min_width_after_scattering(wp.mass, kick, consts),
            "light_mass_free_spread": [
                {"t": t, "width": an.free_spread_width(w0, wp.light_mass, t, consts)}
                for t in wp.times
            ],
        }
    out.json("analytics.json", result)
    return out


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gravdiamag",
        description="Diamagnetic drop-and-scatter superposition: simulation, design and error budgets.",
    )
    parser.add_argument("command", choices=["simulate", "design", "sensitivity", "analytics"])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None, help="override fluctuation.seed")
    parser.add_argument("--samples", type=int, default=None, help="override fluctuation.samples")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = with_overrides(load_config(args.config), args.seed, args.samples)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    code = EXIT_OK
    try:
        if args.command == "simulate":
            out = simulate(cfg)
        elif args.command == "design":
            out, feasible = design(cfg)
            if not feasible:
                print("design infeasible: current density exceeds the configured maximum", file=sys.stderr)
                code = EXIT_INFEASIBLE
        elif args.command == "sensitivity":
            out = sensitivity(cfg)
        else:
            out = analytics(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GravDiamagError, ValueError) as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    out.json("manifest.json", _manifest(args, cfg, out))
    out.write(Path(args.out))
    log.info("wrote %d files to %s", len(out.files), args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
