"""JSON run configuration: parsing, unit conversion, defaults and serialization.

A config is one JSON object with the sections ``constants``, ``particle``,
``scenario``, ``integrator``, ``outputs``, ``design`` and the optional
``fluctuation``, ``sensitivity`` and ``analytics``. Any section may declare
``"length_unit"`` (m, mm, um, nm) and ``"time_unit"`` (s, ms, us); values are
converted to SI when parsed, and the resolved config is always written in SI.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .core import GravDiamagError, ParticleSpec, PhysicalConstants
from .dynamics import IntegratorOptions
from .protocol import ScenarioConfig
from .sensitivity import FluctuationSpec

FORMAT_VERSION = 1

LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6}


class ConfigError(GravDiamagError):
    pass


@dataclass(frozen=True)
class OutputSettings:
    points: int = 2000


@dataclass(frozen=True)
class DesignSettings:
    max_current_density: float = 10e12  # 10 A/um^2


@dataclass(frozen=True)
class SensitivitySettings:
    L_values: tuple[float, ...] = (50e-6, 500e-6)
    target_deviation: float = 2e-11
    b: float = 0.5e-6
    curve_points: int = 50
    curve_range: tuple[float, float] = (1e-12, 1e-9)


@dataclass(frozen=True)
class NVSettings:
    mass: float = 1e-15
    gradient: float = 45.0
    t_max: float = 0.5
    points: int = 101


@dataclass(frozen=True)
class WavePacketSettings:
    mass: float = 1e-15
    trap_omega: float = 100.0
    times: tuple[float, ...] = (0.0, 0.01, 0.02)
    r_ref: float = 1e-6
    light_mass: float = 1e-22
    initial_width: Optional[float] = None  # None: harmonic ground-state width


@dataclass(frozen=True)
class AnalyticsSettings:
    nv: Optional[NVSettings] = None
    wave_packet: Optional[WavePacketSettings] = None


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    outputs: OutputSettings = field(default_factory=OutputSettings)
    design: DesignSettings = field(default_factory=DesignSettings)
    fluctuation: Optional[FluctuationSpec] = None
    sensitivity: Optional[SensitivitySettings] = None
    analytics: Optional[AnalyticsSettings] = None


# field name -> (type, dimension); dimension is "L", "T" or None
_SCHEMA: dict[str, dict[str, tuple[str, Optional[str]]]] = {
    "constants": {
        "mu0": ("float", None),
        "g": ("float", None),
        "chi_rho": ("float", None),
        "hbar": ("float", None),
        "g_s": ("float", None),
        "mu_B": ("float", None),
    },
    "particle": {"mass": ("float", None), "chi_rho": ("float", None)},
    "scenario": {
        "z0": ("float", "L"),
        "delta_x0": ("float", "L"),
        "x_spl": ("float", "L"),
        "z_side": ("float?", "L"),
        "I_split": ("float?", None),
        "I_side": ("float?", None),
        "wires_on": ("bool", None),
        "gravity_on": ("bool", None),
        "wire_radius": ("float", "L"),
        "current_signs": ("ints", None),
        "field_model": ("str", None),
        "exit_radius": ("float", "L"),
        "side_bracket": ("floats", None),
    },
    "integrator": {
        "rel_tol": ("float", None),
        "abs_tol": ("float", None),
        "max_step": ("float", "T"),
        "max_time": ("float", "T"),
        "event_time_tol": ("float", "T"),
    },
    "outputs": {"points": ("int", None)},
    "design": {"max_current_density": ("float", None)},
    "fluctuation": {
        "relative_sigma": ("float", None),
        "samples": ("int", None),
        "seed": ("int", None),
        "distribution": ("str", None),
    },
    "sensitivity": {
        "L_values": ("floats", "L"),
        "target_deviation": ("float", "L"),
        "b": ("float", "L"),
        "curve_points": ("int", None),
        "curve_range": ("floats", "L"),
    },
    "nv": {"mass": ("float", None), "gradient": ("float", None), "t_max": ("float", "T"), "points": ("int", None)},
    "wave_packet": {
        "mass": ("float", None),
        "trap_omega": ("float", None),
        "times": ("floats", "T"),
        "r_ref": ("float", "L"),
        "light_mass": ("float", None),
        "initial_width": ("float?", "L"),
    },
}

_TOP_LEVEL = {
    "format_version",
    "constants",
    "particle",
    "scenario",
    "integrator",
    "outputs",
    "design",
    "fluctuation",
    "sensitivity",
    "analytics",
}


def _coerce(path: str, kind: str, value: Any, scale: float):
    def num(v, p):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{p}: expected a number, got {v!r}")
        if not math.isfinite(v):
            raise ConfigError(f"{p}: value must be finite, got {v!r}")
        return float(v) * scale

    if kind == "float":
        return num(value, path)
    if kind == "float?":
        return None if value is None else num(value, path)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind in ("floats", "ints"):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        if kind == "ints":
            return tuple(_coerce(f"{path}[{i}]", "int", v, 1.0) for i, v in enumerate(value))
        return tuple(num(v, f"{path}[{i}]") for i, v in enumerate(value))
    raise AssertionError(kind)


def _section(raw: dict, name: str, path: Optional[str] = None) -> Optional[dict]:
    path = path or name
    if name not in raw or raw[name] is None:
        return None
    sec = raw[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"{path}: expected an object, got {type(sec).__name__}")
    schema = _SCHEMA[name]
    lu = sec.get("length_unit", "m")
    tu = sec.get("time_unit", "s")
    if lu not in LENGTH_UNITS:
        raise ConfigError(f"{path}.length_unit: unknown unit {lu!r}; use one of {sorted(LENGTH_UNITS)}")
    if tu not in TIME_UNITS:
        raise ConfigError(f"{path}.time_unit: unknown unit {tu!r}; use one of {sorted(TIME_UNITS)}")
    out = {}
    for key, value in sec.items():
        if key in ("length_unit", "time_unit"):
            continue
        if key not in schema:
            raise ConfigError(f"{path}.{key}: unknown field; expected one of {sorted(schema)}")
        kind, dim = schema[key]
        scale = LENGTH_UNITS[lu] if dim == "L" else TIME_UNITS[tu] if dim == "T" else 1.0
        out[key] = _coerce(f"{path}.{key}", kind, value, scale)
    return out


def _build(path: str, cls, values: dict):
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(raw: Any) -> RunConfig:
    """Validate a decoded JSON document and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a JSON object")
    unknown = set(raw) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"config root: unknown section(s) {sorted(unknown)}")
    version = raw.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ConfigError(f"format_version: unsupported version {version!r} (expected {FORMAT_VERSION})")

    constants = _build("constants", PhysicalConstants, _section(raw, "constants") or {})
    particle_vals = _section(raw, "particle") or {}
    particle_vals.setdefault("chi_rho", constants.chi_rho)
    particle = _build("particle", ParticleSpec, particle_vals)
    integrator = _build("integrator", IntegratorOptions, _section(raw, "integrator") or {})
    outputs = _build("outputs", OutputSettings, _section(raw, "outputs") or {})
    scen = _section(raw, "scenario") or {}
    scenario = _build(
        "scenario",
        ScenarioConfig,
        dict(scen, particle=particle, integrator=integrator, constants=constants, output_points=outputs.points),
    )
    design = _build("design", DesignSettings, _section(raw, "design") or {})

    fluct = _section(raw, "fluctuation")
    fluctuation = None if fluct is None else _build("fluctuation", FluctuationSpec, fluct)
    sens = _section(raw, "sensitivity")
    sensitivity = None if sens is None else _build("sensitivity", SensitivitySettings, sens)

    analytics = None
    if raw.get("analytics") is not None:
        an = raw["analytics"]
        if not isinstance(an, dict):
            raise ConfigError("analytics: expected an object")
        extra = set(an) - {"nv", "wave_packet"}
        if extra:
            raise ConfigError(f"analytics: unknown field(s) {sorted(extra)}")
        nv = _section(an, "nv", "analytics.nv")
        wp = _section(an, "wave_packet", "analytics.wave_packet")
        analytics = AnalyticsSettings(
            None if nv is None else _build("analytics.nv", NVSettings, nv),
            None if wp is None else _build("analytics.wave_packet", WavePacketSettings, wp),
        )
    return RunConfig(scenario, outputs, design, fluctuation, sensitivity, analytics)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def bundled_config_path() -> Path:
    return Path(str(resources.files("gravdiamag") / "data" / "reference_scenario.json"))


def _plain(obj, skip=()):
    out = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    """Resolved config in SI units; optional sections appear only when set."""
    s = cfg.scenario
    d: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "constants": _plain(s.constants),
        "particle": _plain(s.particle),
        "scenario": _plain(s, skip=("particle", "integrator", "constants", "output_points")),
        "integrator": _plain(s.integrator, skip=("max_steps",)),
        "outputs": _plain(cfg.outputs),
        "design": _plain(cfg.design),
    }
    if cfg.fluctuation is not None:
        d["fluctuation"] = _plain(cfg.fluctuation)
    if cfg.sensitivity is not None:
        d["sensitivity"] = _plain(cfg.sensitivity)
    if cfg.analytics is not None:
        an = {}
        if cfg.analytics.nv is not None:
            an["nv"] = _plain(cfg.analytics.nv)
        if cfg.analytics.wave_packet is not None:
            an["wave_packet"] = _plain(cfg.analytics.wave_packet)
        d["analytics"] = an
    return d


def with_overrides(cfg: RunConfig, seed: Optional[int] = None, samples: Optional[int] = None) -> RunConfig:
    if seed is None and samples is None:
        return cfg
    fl = cfg.fluctuation or FluctuationSpec()
    if seed is not None:
        fl = replace(fl, seed=seed)
    if samples is not None:
        try:
            fl = replace(fl, samples=samples)
        except ValueError as exc:
            raise ConfigError(f"--samples: {exc}") from exc
    return replace(cfg, fluctuation=fl)
