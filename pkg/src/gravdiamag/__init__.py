"""Mass-independent spatial superposition of a diamagnetic nanoparticle
using gravity and the repulsion of current-carrying wires."""

from .core import GravDiamagError, ParticleSpec, PhysicalConstants, TrajectoryState, Vec2, Wire
from .fields import FieldEnvironment
from .protocol import ScenarioConfig, run_protocol, solve_side_current

__all__ = [
    "FieldEnvironment",
    "GravDiamagError",
    "ParticleSpec",
    "PhysicalConstants",
    "ScenarioConfig",
    "TrajectoryState",
    "Vec2",
    "Wire",
    "run_protocol",
    "solve_side_current",
]
__version__ = "0.1.0"
