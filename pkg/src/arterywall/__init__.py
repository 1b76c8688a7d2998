"""Lumped transport model of the four-layer arterial wall with a
sliding-based proportional nanoparticle drug-release controller."""

from .controller import (BoundEstimates, FeasibilityResult, SensorReading,
                         control_law, min_feasible_release, read_sensor,
                         sliding_surface, steady_gain)
from .errors import ArteryWallError, ConfigError, ParameterError, SimulationError
from .integrate import ImexStepper, SystemState, Trajectory, integrate, step_lumped
from .kinetics import ReactionKinetics
from .model import WallModel
from .params import (ControllerParams, EnvironmentParams, Params,
                     SpeciesTransport, WallGeometry, load_params)
from .wall import LumpedCoefficients, build_coefficients, build_mesh

__version__ = "0.1.0"

__all__ = [
    "ArteryWallError", "BoundEstimates", "ConfigError", "ControllerParams",
    "EnvironmentParams", "FeasibilityResult", "ImexStepper",
    "LumpedCoefficients", "Params", "ParameterError", "ReactionKinetics",
    "SensorReading", "SimulationError", "SpeciesTransport", "SystemState",
    "Trajectory", "WallGeometry", "WallModel", "build_coefficients",
    "build_mesh", "control_law", "integrate", "load_params",
    "min_feasible_release", "read_sensor", "sliding_surface", "steady_gain",
    "step_lumped",
]
