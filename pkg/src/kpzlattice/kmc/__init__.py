"""Kinetic Monte Carlo engine and fluctuation-field observables."""

from ._backend import BACKEND, KERNELS, get_kernel
from .fields import (Mollifier, StructureAccumulator, StructureFunction, bump, fluctuation_field, frame_shift, sine_mode,
                     structure_function, triangular, wick_quadratic)
from .simulator import (SimulationError, SimulationPlan, TrajectoryRecord, check_continuity,
                        height_field, mean_current, replica_generators, simulate, simulate_replicas)

__all__ = [
    "BACKEND", "KERNELS", "get_kernel", "Mollifier", "StructureAccumulator", "StructureFunction", "bump",
    "fluctuation_field", "frame_shift", "sine_mode", "structure_function", "triangular",
    "wick_quadratic", "SimulationError", "SimulationPlan", "TrajectoryRecord", "check_continuity",
    "height_field", "mean_current", "replica_generators", "simulate", "simulate_replicas",
]
