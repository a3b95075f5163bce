"""Stationary Gaussian random fields on regular grids via circulant embedding."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from surroflow.errors import ConfigurationError


@dataclass(frozen=True)
class GridSpec:
    """Regular cell-centered grid. ``nz == 1`` means a 2-D model."""

    nx: int
    ny: int
    nz: int = 1
    dx: float = 50.0
    dy: float = 50.0
    dz: float = 10.0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ConfigurationError(f"grid dims must be >= 1, got {self.shape}")
        if min(self.dx, self.dy, self.dz) <= 0:
            raise ConfigurationError("cell sizes must be positive")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def ndim(self) -> int:
        return 2 if self.nz == 1 else 3

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def spacing(self) -> Tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz


@dataclass(frozen=True)
class GeostatConfig:
    """Log-permeability statistics and the porosity coupling.

    Permeability is in millidarcy; ``mean_logk``/``std_logk`` refer to the
    natural log of that value. Correlation lengths are in meters and apply to
    a squared-exponential covariance ``exp(-0.5 * sum((h_i / l_i)^2))``.
    """

    mean_logk: float = 2.5
    std_logk: float = 1.5
    corr_len_x: float = 400.0
    corr_len_y: float = 400.0
    corr_len_z: float = 15.0
    perm_cut_lo_md: float = 1e-4
    perm_cut_hi_md: float = 1e4
    poro_slope: float = 0.03
    poro_intercept: float = 0.08
    poro_lo: float = 0.05
    poro_hi: float = 0.3

    def __post_init__(self):
        if self.std_logk < 0:
            raise ConfigurationError("std_logk must be >= 0")
        if min(self.corr_len_x, self.corr_len_y, self.corr_len_z) <= 0:
            raise ConfigurationError("correlation lengths must be positive")
        if not 0 < self.perm_cut_lo_md < self.perm_cut_hi_md:
            raise ConfigurationError("permeability cutoffs must satisfy 0 < lo < hi")


def _embedding_filter(grid: GridSpec, cfg: GeostatConfig) -> np.ndarray:
    """Square root of the circulant-embedding spectrum on the padded torus."""
    lengths = (cfg.corr_len_x, cfg.corr_len_y, cfg.corr_len_z)
    padded = tuple(1 if n == 1 else 2 * n for n in grid.shape)
    sq = np.zeros(padded)
    for axis, (m, h, ell) in enumerate(zip(padded, grid.spacing, lengths)):
        idx = np.arange(m)
        dist = np.minimum(idx, m - idx) * h
        shape = [1, 1, 1]
        shape[axis] = m
        sq = sq + (dist / ell).reshape(shape) ** 2
    cov = np.exp(-0.5 * sq)
    lam = np.fft.fftn(cov).real
    # SE covariance can yield tiny negative embedding eigenvalues; clip them.
    return np.sqrt(np.maximum(lam, 0.0))


def sample_unit_field(grid: GridSpec, cfg: GeostatConfig, rng: np.random.Generator,
                      filt: np.ndarray = None) -> np.ndarray:
    """One zero-mean, unit-variance stationary field of shape ``grid.shape``."""
    if filt is None:
        filt = _embedding_filter(grid, cfg)
    white = rng.standard_normal(filt.shape)
    field = np.fft.ifftn(np.fft.fftn(white) * filt).real
    return np.ascontiguousarray(field[: grid.nx, : grid.ny, : grid.nz])


def generate_log_permeability(grid: GridSpec, cfg: GeostatConfig, n: int,
                              seed: int) -> np.ndarray:
    """Sample ``n`` log-permeability fields, shaped ``[n, nx, ny, nz]``.

    Each sample uses an independent, sample-indexed RNG stream so the result
    is identical whether samples are drawn serially or split across workers.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    filt = _embedding_filter(grid, cfg)
    out = np.empty((n,) + grid.shape)
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        out[i] = cfg.mean_logk + cfg.std_logk * sample_unit_field(grid, cfg, rng, filt)
    return out


def apply_permeability_cutoffs(logk: np.ndarray, cfg: GeostatConfig) -> np.ndarray:
    """Clip log-permeability so k stays within the configured mD cutoffs."""
    return np.clip(logk, np.log(cfg.perm_cut_lo_md), np.log(cfg.perm_cut_hi_md))


def porosity_from_logk(logk: np.ndarray, cfg: GeostatConfig = GeostatConfig()) -> np.ndarray:
    """Porosity coupled linearly to log-permeability, clamped to its bounds."""
    phi = cfg.poro_slope * np.asarray(logk) + cfg.poro_intercept
    return np.clip(phi, cfg.poro_lo, cfg.poro_hi)
