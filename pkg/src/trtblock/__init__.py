"""Multigroup thermal radiative transfer in 2D with multilevel quasidiffusion
and outer iteration cycles over coarse time blocks."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import average_convergence_rate, energy_balance_history, error_vs_reference
from .driver import ConvergenceCriteria, ConvergenceFailure, Problem, RunRecord, run_problem, run_standard
from .grid import (
    AngularQuadrature, ConfigurationError, FrequencyGroups, SpatialMesh, TimeBlockPartition,
    build_quadrature, build_time_blocks, partition_by_steps,
)
from .physics import ConstantOpacity, FleckCummingsOpacity, MaterialModel

__version__ = "0.1.0"

__all__ = [
    "AngularQuadrature", "ConfigError", "ConfigurationError", "ConstantOpacity",
    "ConvergenceCriteria", "ConvergenceFailure", "FleckCummingsOpacity", "FrequencyGroups",
    "MaterialModel", "Problem", "RunConfig", "RunRecord", "SpatialMesh", "TimeBlockPartition",
    "average_convergence_rate", "build_quadrature", "build_time_blocks",
    "energy_balance_history", "error_vs_reference", "load_config", "parse_config",
    "partition_by_steps", "run_problem", "run_standard",
]
