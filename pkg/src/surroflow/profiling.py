"""Dataset profiling and pressure preprocessing.

Statistics are computed on the training split only, so validation and test
data never leak into the normalization constants. Pressure is rescaled from
pascal to bar and standardized; saturation is already in [0, 1] and passes
through untouched.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from surroflow.datagen.bundle import DatasetBundle
from surroflow.errors import StructuralValidationError

PA_PER_BAR = 1e5
NORM_EPS = 1e-8
NEAR_ZERO_TAU = 1e-4
SPARSE_FRACTION = 0.5


@dataclass(frozen=True)
class FieldStats:
    min: float
    max: float
    mean: float
    std: float
    fraction_near_zero: float

    def to_dict(self) -> Dict[str, float]:
        return {"min": self.min, "max": self.max, "mean": self.mean,
                "std": self.std, "fraction_near_zero": self.fraction_near_zero}


def field_stats(arr: np.ndarray, tau: float = NEAR_ZERO_TAU) -> FieldStats:
    arr = np.asarray(arr, dtype=np.float64)
    return FieldStats(min=float(arr.min()), max=float(arr.max()),
                      mean=float(arr.mean()), std=float(arr.std()),
                      fraction_near_zero=float((np.abs(arr) <= tau).mean()))


@dataclass(frozen=True)
class DataProfile:
    n_samples: int
    grid: Tuple[int, int, int]
    n_timesteps: int
    split_sizes: Dict[str, int]
    input_stats: FieldStats
    qoi_stats: Dict[str, FieldStats]

    def is_sparse(self, qoi: str) -> bool:
        """Most values near zero: front-like target, not a smooth field."""
        return self.qoi_stats[qoi].fraction_near_zero > SPARSE_FRACTION

    def to_dict(self) -> Dict:
        return {
            "n_samples": self.n_samples,
            "grid": list(self.grid),
            "n_timesteps": self.n_timesteps,
            "split_sizes": self.split_sizes,
            "input_stats": self.input_stats.to_dict(),
            "qoi_stats": {q: s.to_dict() for q, s in self.qoi_stats.items()},
            "stats_split": "train",
        }


def _check_structure(bundle: DatasetBundle) -> None:
    manifest = bundle.manifest
    n = int(manifest["n_samples"])
    t = int(manifest["n_timesteps"])
    g = manifest["grid"]
    grid_shape = (int(g["nx"]), int(g["ny"]), int(g["nz"]))
    expected = {
        "inputs": (n, 1) + grid_shape,
        "pressure": (n, t) + grid_shape,
        "saturation": (n, t) + grid_shape,
    }
    for name, want in expected.items():
        have = tuple(getattr(bundle, name).shape)
        if have != want:
            raise StructuralValidationError(
                f"array {name!r} has shape {have}, manifest implies {want}")
        listed = tuple(manifest["arrays"][name]["shape"])
        if listed != want:
            raise StructuralValidationError(
                f"manifest shape for {name!r} is {listed}, expected {want}")
    for split, (lo, hi) in manifest["splits"].items():
        if not 0 <= lo <= hi <= n:
            raise StructuralValidationError(
                f"split {split!r} range [{lo}, {hi}) outside 0..{n}")


def profile_dataset(bundle: DatasetBundle) -> DataProfile:
    """Validate bundle structure and summarize the training split."""
    _check_structure(bundle)
    tr_in, tr_p, tr_s = bundle.split_arrays("train")
    g = bundle.manifest["grid"]
    return DataProfile(
        n_samples=bundle.n_samples,
        grid=(int(g["nx"]), int(g["ny"]), int(g["nz"])),
        n_timesteps=bundle.n_timesteps,
        split_sizes={name: hi - lo
                     for name, (lo, hi) in bundle.manifest["splits"].items()},
        input_stats=field_stats(tr_in),
        qoi_stats={"pressure": field_stats(tr_p), "saturation": field_stats(tr_s)},
    )


@dataclass(frozen=True)
class PreprocessingConfig:
    mu_p: float
    sigma_p: float
    eps: float = NORM_EPS
    tau: float = NEAR_ZERO_TAU

    def to_dict(self) -> Dict[str, float]:
        return {"mu_p": self.mu_p, "sigma_p": self.sigma_p,
                "eps": self.eps, "tau": self.tau}

    @staticmethod
    def from_dict(d: Dict) -> "PreprocessingConfig":
        return PreprocessingConfig(d["mu_p"], d["sigma_p"],
                                   d.get("eps", NORM_EPS), d.get("tau", NEAR_ZERO_TAU))


def configure_preprocessing(bundle: DatasetBundle) -> PreprocessingConfig:
    """Standardization constants from the training-split pressure, in bar."""
    train_pressure = bundle.split_arrays("train")[1]
    in_bar = np.asarray(train_pressure, dtype=np.float64) / PA_PER_BAR
    return PreprocessingConfig(mu_p=float(in_bar.mean()), sigma_p=float(in_bar.std()))


def normalize_pressure(pressure_pa: np.ndarray, cfg: PreprocessingConfig) -> np.ndarray:
    return (np.asarray(pressure_pa) / PA_PER_BAR - cfg.mu_p) / (cfg.sigma_p + cfg.eps)


def denormalize_pressure(normed, cfg: PreprocessingConfig):
    """Inverse map, back to pascal."""
    return (np.asarray(normed) * (cfg.sigma_p + cfg.eps) + cfg.mu_p) * PA_PER_BAR
