"""Synthetic dataset generation: permeability fields, pressure, and plume proxy."""

from surroflow.datagen.grf import (
    GeostatConfig,
    GridSpec,
    generate_log_permeability,
    porosity_from_logk,
)
from surroflow.datagen.darcy import WellSpec, solve_darcy_pressure
from surroflow.datagen.plume import PlumeConfig, propagate_saturation
from surroflow.datagen.bundle import (
    DatasetBundle,
    DatasetConfig,
    build_dataset,
    load_bundle,
    write_bundle,
)

__all__ = [
    "GridSpec",
    "GeostatConfig",
    "generate_log_permeability",
    "porosity_from_logk",
    "WellSpec",
    "solve_darcy_pressure",
    "PlumeConfig",
    "propagate_saturation",
    "DatasetConfig",
    "DatasetBundle",
    "build_dataset",
    "write_bundle",
    "load_bundle",
]
