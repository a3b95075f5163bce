"""Dataset assembly and on-disk layout.

A dataset directory holds ``manifest.json`` plus three raw arrays written as
little-endian float32 in C order: ``inputs.f32`` [N,1,nx,ny,nz] (clipped
log-permeability), ``pressure.f32`` and ``saturation.f32`` [N,T,nx,ny,nz].
Splits are sequential 70/10/20 by sample index.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from surroflow.datagen.darcy import WellSpec, solve_darcy_pressure
from surroflow.datagen.grf import (
    GeostatConfig,
    GridSpec,
    apply_permeability_cutoffs,
    generate_log_permeability,
    porosity_from_logk,
)
from surroflow.datagen.plume import PlumeConfig, propagate_saturation
from surroflow.errors import ConfigurationError, StructuralValidationError

FORMAT_ID = "surroflow-dataset/v1"
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
ARRAY_NAMES = ("inputs", "pressure", "saturation")


@dataclass(frozen=True)
class DatasetConfig:
    grid: GridSpec = GridSpec(32, 32, 1)
    geostat: GeostatConfig = GeostatConfig()
    plume: PlumeConfig = PlumeConfig()
    n_samples: int = 200
    n_timesteps: int = 8
    seed: int = 7
    datum_pa: float = 2.0814e7
    viscosity: float = 5e-4
    well_rate: float = 2e-3
    # injectors run under a bottom-hole-pressure limit: the per-sample rate
    # is chosen so the steady peak buildup hits this target exactly, which
    # keeps tight realizations from producing unbounded pressure spikes
    target_buildup_pa: float = 3e6

    def __post_init__(self):
        if self.n_samples < 10:
            raise ConfigurationError("n_samples must be >= 10 to split 70/10/20")
        if self.n_timesteps < 2:
            raise ConfigurationError("n_timesteps must be >= 2")
        if self.target_buildup_pa <= 0:
            raise ConfigurationError("target_buildup_pa must be positive")

    @property
    def well(self) -> WellSpec:
        g = self.grid
        return WellSpec(g.nx // 2, g.ny // 2, g.nz // 2, self.well_rate)


def split_sizes(n: int) -> Tuple[int, int, int]:
    # floor(0.7n) / floor(0.1n) / remainder, assigned sequentially; integer
    # arithmetic so float representation of the fractions cannot leak in
    n_train = (7 * n) // 10
    n_val = n // 10
    return n_train, n_val, n - n_train - n_val


@dataclass
class DatasetBundle:
    inputs: np.ndarray
    pressure: np.ndarray
    saturation: np.ndarray
    manifest: Dict = field(repr=False)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(**self.manifest["grid"])

    @property
    def n_samples(self) -> int:
        return int(self.manifest["n_samples"])

    @property
    def n_timesteps(self) -> int:
        return int(self.manifest["n_timesteps"])

    def split_range(self, name: str) -> Tuple[int, int]:
        lo, hi = self.manifest["splits"][name]
        return int(lo), int(hi)

    def split_arrays(self, name: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        lo, hi = self.split_range(name)
        return self.inputs[lo:hi], self.pressure[lo:hi], self.saturation[lo:hi]


def _manifest_for(cfg: DatasetConfig, arrays: Dict[str, np.ndarray]) -> Dict:
    n_train, n_val, n_test = split_sizes(cfg.n_samples)
    manifest = {
        "format": FORMAT_ID,
        "n_samples": cfg.n_samples,
        "n_timesteps": cfg.n_timesteps,
        "seed": cfg.seed,
        "grid": dataclasses.asdict(cfg.grid),
        "geostat": dataclasses.asdict(cfg.geostat),
        "plume": dataclasses.asdict(cfg.plume),
        "datum_pa": cfg.datum_pa,
        "viscosity": cfg.viscosity,
        "target_buildup_pa": cfg.target_buildup_pa,
        "well": dataclasses.asdict(cfg.well),
        "splits": {
            "train": [0, n_train],
            "val": [n_train, n_train + n_val],
            "test": [n_train + n_val, cfg.n_samples],
        },
        "arrays": {
            name: {
                "file": f"{name}.f32",
                "shape": list(arr.shape),
                "dtype": "<f4",
                "sha256": hashlib.sha256(arr.astype("<f4").tobytes()).hexdigest(),
            }
            for name, arr in arrays.items()
        },
    }
    canonical = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    manifest["content_hash"] = hashlib.sha256(canonical.encode()).hexdigest()
    return manifest


def build_dataset(cfg: DatasetConfig) -> DatasetBundle:
    """Generate the full bundle in memory. Deterministic in ``cfg.seed``."""
    grid, n, n_t = cfg.grid, cfg.n_samples, cfg.n_timesteps
    logk = apply_permeability_cutoffs(
        generate_log_permeability(grid, cfg.geostat, n, cfg.seed), cfg.geostat)
    perm = np.exp(logk)
    poro = porosity_from_logk(logk, cfg.geostat)

    inputs = logk[:, None].astype("<f4")
    pressure = np.empty((n, n_t) + grid.shape, dtype="<f4")
    saturation = np.empty_like(pressure)
    ramp = np.arange(n_t) / (n_t - 1)
    for i in range(n):
        probe = cfg.well
        steady = solve_darcy_pressure(perm[i], grid, cfg.datum_pa, [probe],
                                      viscosity=cfg.viscosity)
        buildup = steady - cfg.datum_pa
        # pressure is linear in the rate, so one probe solve is enough to
        # rescale onto the bottom-hole-pressure target
        scale = cfg.target_buildup_pa / max(float(buildup.max()), 1e-30)
        buildup *= scale
        well = WellSpec(probe.i, probe.j, probe.k, probe.rate * scale)
        pressure[i] = (cfg.datum_pa + ramp[:, None, None, None] * buildup).astype("<f4")
        saturation[i] = propagate_saturation(
            perm[i], poro[i], cfg.datum_pa + buildup, grid, well, n_t, cfg.plume).astype("<f4")

    arrays = {"inputs": inputs, "pressure": pressure, "saturation": saturation}
    return DatasetBundle(manifest=_manifest_for(cfg, arrays), **arrays)


def write_bundle(bundle: DatasetBundle, out_dir: str, force: bool = False) -> str:
    if os.path.isdir(out_dir) and os.listdir(out_dir) and not force:
        raise ConfigurationError(
            f"output directory {out_dir!r} is not empty (pass force to overwrite)")
    os.makedirs(out_dir, exist_ok=True)
    for name in ARRAY_NAMES:
        spec = bundle.manifest["arrays"][name]
        arr = getattr(bundle, name)
        with open(os.path.join(out_dir, spec["file"]), "wb") as fh:
            fh.write(np.ascontiguousarray(arr).astype("<f4").tobytes())
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(bundle.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def load_bundle(data_dir: str, verify: bool = False) -> DatasetBundle:
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise StructuralValidationError(f"missing manifest.json in {data_dir!r}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT_ID:
        raise StructuralValidationError(
            f"unsupported dataset format {manifest.get('format')!r}, expected {FORMAT_ID!r}")

    arrays = {}
    for name in ARRAY_NAMES:
        spec = manifest.get("arrays", {}).get(name)
        if spec is None:
            raise StructuralValidationError(f"manifest lists no array {name!r}")
        path = os.path.join(data_dir, spec["file"])
        if not os.path.isfile(path):
            raise StructuralValidationError(f"missing array file {spec['file']!r}")
        flat = np.fromfile(path, dtype="<f4")
        expected = int(np.prod(spec["shape"]))
        if flat.size != expected:
            raise StructuralValidationError(
                f"array {name!r} has {flat.size} values, manifest shape "
                f"{tuple(spec['shape'])} needs {expected}")
        if verify and hashlib.sha256(flat.tobytes()).hexdigest() != spec["sha256"]:
            raise StructuralValidationError(f"array {name!r} fails its checksum")
        arrays[name] = flat.reshape(spec["shape"])
    return DatasetBundle(manifest=manifest, **arrays)
