"""Steady single-phase Darcy pressure on a regular grid (two-point flux).

Face transmissibilities use the harmonic mean of cell mobilities; Dirichlet
sides are imposed through half-cell boundary transmissibilities; wells are
point sources in the right-hand side. The resulting system is symmetric
positive definite whenever at least one Dirichlet face is present.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from surroflow.datagen.grf import GridSpec
from surroflow.errors import ConfigurationError, NumericalError

MD_TO_M2 = 9.869233e-16

_SIDES = ("x-", "x+", "y-", "y+", "z-", "z+")
# Scalar Dirichlet shorthand applies to the lateral sides; z faces stay sealed.
_LATERAL = ("x-", "x+", "y-", "y+")


@dataclass(frozen=True)
class WellSpec:
    """Point source at cell ``(i, j, k)`` with rate in m^3/s (positive = injection)."""

    i: int
    j: int
    k: int = 0
    rate: float = 1e-3


def _normalize_dirichlet(dirichlet, grid: GridSpec) -> Dict[str, float]:
    if dirichlet is None:
        return {}
    if isinstance(dirichlet, (int, float)):
        return {s: float(dirichlet) for s in _LATERAL}
    bad = set(dirichlet) - set(_SIDES)
    if bad:
        raise ConfigurationError(f"unknown boundary sides {sorted(bad)}; valid: {_SIDES}")
    if grid.nz == 1 and (set(dirichlet) & {"z-", "z+"}):
        raise ConfigurationError("z-side Dirichlet given but the grid is 2-D (nz=1)")
    return {s: float(v) for s, v in dirichlet.items()}


def _assemble(perm_md: np.ndarray, grid: GridSpec,
              dirichlet: Dict[str, float], viscosity: float):
    shape = grid.shape
    if perm_md.shape != shape:
        raise ConfigurationError(
            f"permeability shape {perm_md.shape} does not match grid {shape}")
    if np.any(perm_md <= 0) or not np.all(np.isfinite(perm_md)):
        raise ConfigurationError("permeability must be finite and positive")

    lam = perm_md * MD_TO_M2 / viscosity
    n = grid.n_cells
    ids = np.arange(n).reshape(shape)
    diag = np.zeros(n)
    rhs = np.zeros(n)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []

    spacing = grid.spacing
    areas = (grid.dy * grid.dz, grid.dx * grid.dz, grid.dx * grid.dy)

    for axis in range(3):
        if shape[axis] == 1:
            continue
        h, area = spacing[axis], areas[axis]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        l1 = lam[tuple(lo)]
        l2 = lam[tuple(hi)]
        t = (area / (0.5 * h / l1 + 0.5 * h / l2)).ravel()
        id1 = ids[tuple(lo)].ravel()
        id2 = ids[tuple(hi)].ravel()
        rows.extend([id1, id2])
        cols.extend([id2, id1])
        vals.extend([-t, -t])
        np.add.at(diag, id1, t)
        np.add.at(diag, id2, t)

    for side, value in dirichlet.items():
        axis = "xyz".index(side[0])
        if shape[axis] == 1 and side[0] != "z":
            raise ConfigurationError(f"side {side} has no extent on this grid")
        h, area = spacing[axis], areas[axis]
        sl = [slice(None)] * 3
        sl[axis] = 0 if side[1] == "-" else shape[axis] - 1
        tb = (2.0 * area * lam[tuple(sl)] / h).ravel()
        cell = ids[tuple(sl)].ravel()
        np.add.at(diag, cell, tb)
        np.add.at(rhs, cell, tb * value)

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    return mat, rhs


def solve_darcy_pressure(perm_md: np.ndarray, grid: GridSpec,
                         dirichlet: Union[float, Dict[str, float], None],
                         wells: Optional[List[WellSpec]] = None,
                         viscosity: float = 5e-4,
                         max_rel_residual: float = 1e-8) -> np.ndarray:
    """Solve for cell pressures [Pa]; shape ``grid.shape``.

    ``dirichlet`` is either a scalar (applied to all lateral sides) or a
    ``{side: value}`` dict with sides from x-/x+/y-/y+/z-/z+. At least one
    Dirichlet side is required, otherwise the system has no pressure datum.
    """
    bc = _normalize_dirichlet(dirichlet, grid)
    if not bc:
        raise ConfigurationError(
            "no Dirichlet side given: the pressure system is singular without "
            "a fixed-pressure reference")
    mat, rhs = _assemble(np.asarray(perm_md, dtype=float), grid, bc, viscosity)
    for w in wells or []:
        if not (0 <= w.i < grid.nx and 0 <= w.j < grid.ny and 0 <= w.k < grid.nz):
            raise ConfigurationError(f"well ({w.i},{w.j},{w.k}) outside grid {grid.shape}")
        rhs[(w.i * grid.ny + w.j) * grid.nz + w.k] += w.rate

    p = spla.spsolve(mat, rhs)
    scale = max(float(np.linalg.norm(rhs)), 1e-300)
    rel = float(np.linalg.norm(mat @ p - rhs)) / scale
    if not np.isfinite(rel) or rel > max_rel_residual:
        raise NumericalError(f"pressure solve residual {rel:.3e} exceeds {max_rel_residual:.1e}")
    return p.reshape(grid.shape)
