"""Fluctuation-induced (Casimir) interactions from sparse log-determinants on a Yee lattice."""

from .checkpoint import NodeCache, Runner
from .config import RunConfig
from .estimators import PlacementEnergy, PowerLawFit
from .experiments import (
    OnlineMoments,
    RoughEnsembleResult,
    SeparationCurve,
    TorqueCurve,
    fit_power_law,
    run_crossover_sweep,
    run_rough_ensemble,
    run_torque_sweep,
)
from .lattice import Lattice
from .materials import DielectricModel, MaterialMap
from .operators import SparseOperator, assemble_DA, assemble_DG
from .placements import Placement, PlacementEngine
from .quadrature import FrequencyGrid, build_grid, free_energy_difference, select_alpha
from .scenes import (
    DiskPairScene,
    ParticleScene,
    RoughSurfaceScene,
    build_disk_pair,
    build_single_disk,
    generate_rough_surface,
    place_probe_particle,
)

__version__ = "0.1.0"

__all__ = [
    "DielectricModel",
    "DiskPairScene",
    "FrequencyGrid",
    "Lattice",
    "MaterialMap",
    "NodeCache",
    "OnlineMoments",
    "ParticleScene",
    "Placement",
    "PlacementEnergy",
    "PlacementEngine",
    "PowerLawFit",
    "RoughEnsembleResult",
    "RoughSurfaceScene",
    "RunConfig",
    "Runner",
    "SeparationCurve",
    "SparseOperator",
    "TorqueCurve",
    "assemble_DA",
    "assemble_DG",
    "build_disk_pair",
    "build_grid",
    "build_single_disk",
    "fit_power_law",
    "free_energy_difference",
    "generate_rough_surface",
    "place_probe_particle",
    "run_crossover_sweep",
    "run_rough_ensemble",
    "run_torque_sweep",
    "select_alpha",
]
