"""Particle liquid simulation with per-region time stepping.

Weakly compressible and predictive-corrective incompressible SPH
solvers that assign larger time steps to calm spatial blocks and
smaller ones where the flow is fast or strongly forced, plus
global-stepping baselines and a benchmark harness comparing the two.
"""

from .bench import SOLVER_NAMES, compare, make_solver, run_simulation
from .errors import ConfigError, NumericalError
from .grid import BlockGrid
from .kernels import KernelSet
from .pcisph import DEFAULT_SCHEDULE, MajorStepController, PcisphSolver, pci_delta, validate_schedule
from .regions import assign_regions, derive_observed, expand_fast_regions, smooth_regions
from .scene import PRESET_NAMES, Scene, load_scene, parse_scene_text, preset_scene, seed_particles
from .stats import StepStats, read_stats, write_stats
from .wcsph import WcsphSolver, tait_pressure

__version__ = "0.1.0"

__all__ = [
    "BlockGrid",
    "ConfigError",
    "DEFAULT_SCHEDULE",
    "KernelSet",
    "MajorStepController",
    "NumericalError",
    "PRESET_NAMES",
    "PcisphSolver",
    "SOLVER_NAMES",
    "Scene",
    "StepStats",
    "WcsphSolver",
    "assign_regions",
    "compare",
    "derive_observed",
    "expand_fast_regions",
    "load_scene",
    "make_solver",
    "parse_scene_text",
    "pci_delta",
    "preset_scene",
    "read_stats",
    "run_simulation",
    "seed_particles",
    "smooth_regions",
    "tait_pressure",
    "validate_schedule",
    "write_stats",
    "__version__",
]
