"""Kinematic plume proxy: sparse, monotonically growing saturation fields.

Arrival time at a cell is the straight-ray integral of a slowness field
built from porosity and permeability (slow where tight, fast where open).
The front radius follows the square (2-D) or cube (3-D) root of cumulative
injected volume under a linearly ramped rate, so timestep 0 is the
pre-injection state: zero everywhere except the well cell, which gets a
small head start. For a homogeneous field the arrival reduces exactly to
slowness * Euclidean distance, so the plume is radially monotone there.
"""

from dataclasses import dataclass

import numpy as np

from surroflow.datagen.darcy import WellSpec
from surroflow.datagen.grf import GridSpec
from surroflow.errors import ConfigurationError


@dataclass(frozen=True)
class PlumeConfig:
    s_max: float = 0.5
    alpha: float = 0.5
    front_width_cells: float = 1.5
    final_radius_frac: float = 0.55
    ray_step_frac: float = 0.25

    def __post_init__(self):
        if not 0 < self.s_max <= 1:
            raise ConfigurationError("s_max must be in (0, 1]")
        if self.final_radius_frac <= 0 or self.ray_step_frac <= 0:
            raise ConfigurationError("radius and ray-step fractions must be positive")


def _cell_centers(grid: GridSpec) -> np.ndarray:
    axes = [
        (np.arange(grid.nx) + 0.5) * grid.dx,
        (np.arange(grid.ny) + 0.5) * grid.dy,
        (np.arange(grid.nz) + 0.5) * grid.dz,
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def arrival_times(perm_md: np.ndarray, porosity: np.ndarray, grid: GridSpec,
                  well: WellSpec, cfg: PlumeConfig) -> np.ndarray:
    """Ray-integrated arrival time per cell, in effective meters."""
    slow = (porosity / porosity.mean()) * (perm_md / np.exp(np.log(perm_md).mean())) ** (-cfg.alpha)
    centers = _cell_centers(grid)
    well_center = centers[(well.i * grid.ny + well.j) * grid.nz + well.k]
    delta = centers - well_center
    r = np.linalg.norm(delta, axis=1)

    step = cfg.ray_step_frac * min(grid.dx, grid.dy)
    m = max(1, int(np.ceil(r.max() / step)))
    fracs = (np.arange(m) + 0.5) / m
    pts = well_center + delta[:, None, :] * fracs[None, :, None]
    spacing = np.array(grid.spacing)
    idx = np.clip((pts / spacing).astype(np.int64), 0,
                  np.array(grid.shape, dtype=np.int64) - 1)
    samples = slow[idx[..., 0], idx[..., 1], idx[..., 2]]
    return (samples.mean(axis=1) * r).reshape(grid.shape)


def propagate_saturation(perm_md: np.ndarray, porosity: np.ndarray,
                         pressure: np.ndarray, grid: GridSpec, well: WellSpec,
                         n_timesteps: int,
                         cfg: PlumeConfig = PlumeConfig()) -> np.ndarray:
    """Saturation snapshots ``[T, nx, ny, nz]`` with values in [0, 1].

    ``pressure`` must be the steady solve for the same permeability and well;
    it is checked for consistency (finite, peaked at the well cell).
    """
    if n_timesteps < 1:
        raise ConfigurationError("n_timesteps must be >= 1 (timestep 0 is pre-injection)")
    for name, arr in (("perm", perm_md), ("porosity", porosity), ("pressure", pressure)):
        if np.asarray(arr).shape != grid.shape:
            raise ConfigurationError(f"{name} shape {np.asarray(arr).shape} != grid {grid.shape}")
    if not np.all(np.isfinite(pressure)):
        raise ConfigurationError("pressure field contains non-finite values")
    well_flat = (well.i * grid.ny + well.j) * grid.nz + well.k
    if int(np.argmax(pressure)) != well_flat:
        raise ConfigurationError(
            "pressure peak is not at the well cell; perm/pressure/well are inconsistent")

    tau = arrival_times(perm_md, porosity, grid, well, cfg)
    tau_flat = tau.ravel()
    head = 0.5 * np.min(np.delete(tau_flat, well_flat))
    width = cfg.front_width_cells * min(grid.dx, grid.dy)

    extents = [n * h for n, h in zip(grid.shape, grid.spacing) if n > 1]
    r_final = cfg.final_radius_frac * 0.5 * min(extents)
    if n_timesteps == 1:
        radius = np.zeros(1)  # pre-injection snapshot only
    else:
        ramp = np.arange(n_timesteps) / (n_timesteps - 1)
        volume = np.cumsum(ramp)
        radius = r_final * (volume / volume[-1]) ** (1.0 / grid.ndim)

    out = np.zeros((n_timesteps,) + grid.shape)
    for t in range(n_timesteps):
        depth = radius[t] + head - tau
        out[t] = np.where(depth > 0, cfg.s_max * (1.0 - np.exp(-depth / width)), 0.0)
    return out
