"""Pressure solver checks against an independently assembled dense system."""

import numpy as np
import pytest

from surroflow.datagen.darcy import (MD_TO_M2, WellSpec, solve_darcy_pressure)
from surroflow.datagen.grf import GridSpec
from surroflow.errors import ConfigurationError


def dense_reference(perm_md, grid, dirichlet, wells=(), viscosity=5e-4):
    """Brute-force 2-point-flux assembly with explicit loops.

    Written independently of the production code: per-cell neighbor walk,
    harmonic face transmissibility, half-cell Dirichlet terms, dense solve.
    """
    nx, ny, nz = grid.shape
    lam = np.asarray(perm_md, dtype=float) * MD_TO_M2 / viscosity
    n = nx * ny * nz
    A = np.zeros((n, n))
    b = np.zeros(n)

    def fid(i, j, k):
        return (i * ny + j) * nz + k

    spacing = {0: grid.dx, 1: grid.dy, 2: grid.dz}
    area = {0: grid.dy * grid.dz, 1: grid.dx * grid.dz, 2: grid.dx * grid.dy}

    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                me = fid(i, j, k)
                for axis, (di, dj, dk) in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
                    ni, nj, nk = i + di, j + dj, k + dk
                    if ni >= nx or nj >= ny or nk >= nz:
                        continue
                    h = spacing[axis]
                    l1, l2 = lam[i, j, k], lam[ni, nj, nk]
                    t = area[axis] / (0.5 * h / l1 + 0.5 * h / l2)
                    other = fid(ni, nj, nk)
                    A[me, me] += t
                    A[other, other] += t
                    A[me, other] -= t
                    A[other, me] -= t

    for side, value in dirichlet.items():
        axis = "xyz".index(side[0])
        h = spacing[axis]
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    pos = (i, j, k)[axis]
                    edge = 0 if side[1] == "-" else (nx, ny, nz)[axis] - 1
                    if pos != edge:
                        continue
                    me = fid(i, j, k)
                    t = 2.0 * area[axis] * lam[i, j, k] / h
                    A[me, me] += t
                    b[me] += t * value

    for w in wells:
        b[fid(w.i, w.j, w.k)] += w.rate
    return np.linalg.solve(A, b).reshape(grid.shape)


def test_heterogeneous_matches_dense_oracle():
    rng = np.random.default_rng(0)
    grid = GridSpec(4, 4, 1)
    perm = np.exp(rng.normal(2.5, 1.5, grid.shape))
    bc = {"x-": 2.0e7, "x+": 2.1e7, "y-": 1.9e7, "y+": 2.05e7}
    wells = [WellSpec(2, 1, 0, 3e-3)]
    got = solve_darcy_pressure(perm, grid, bc, wells)
    want = dense_reference(perm, grid, bc, wells)
    assert np.max(np.abs(got - want)) <= 1e-10 * max(1.0, np.abs(want).max())


def test_heterogeneous_3d_matches_dense_oracle():
    rng = np.random.default_rng(3)
    grid = GridSpec(3, 4, 2)
    perm = np.exp(rng.normal(2.0, 1.0, grid.shape))
    bc = {"x-": 1.0e5, "y+": 3.0e5, "z-": 2.0e5}
    wells = [WellSpec(1, 2, 1, 1e-4)]
    got = solve_darcy_pressure(perm, grid, bc, wells)
    want = dense_reference(perm, grid, bc, wells)
    assert np.allclose(got, want, rtol=0, atol=1e-10 * np.abs(want).max())


def test_homogeneous_profile_is_linear():
    grid = GridSpec(12, 5, 1)
    perm = np.full(grid.shape, 120.0)
    got = solve_darcy_pressure(perm, grid, {"x-": 1.0, "x+": 0.0})
    centers = (np.arange(grid.nx) + 0.5) * grid.dx
    want = 1.0 - centers / (grid.nx * grid.dx)
    assert np.allclose(got, want[:, None, None], atol=1e-10)
    # uniform across the sealed transverse direction
    assert np.ptp(got, axis=1).max() <= 1e-12


def test_centered_source_is_rotation_symmetric():
    grid = GridSpec(9, 9, 1)
    perm = np.full(grid.shape, 50.0)
    p = solve_darcy_pressure(perm, grid, 1.0e5, [WellSpec(4, 4, 0, 1e-3)])
    field = p[:, :, 0]
    assert np.max(np.abs(field - np.rot90(field))) <= 1e-10 * field.max()


def test_maximum_principle_source_free():
    rng = np.random.default_rng(11)
    for _ in range(25):
        grid = GridSpec(6, 6, 1)
        perm = np.exp(rng.normal(2.5, 1.5, grid.shape))
        sides = {"x-": rng.uniform(1, 2), "x+": rng.uniform(1, 2),
                 "y-": rng.uniform(1, 2), "y+": rng.uniform(1, 2)}
        p = solve_darcy_pressure(perm, grid, sides)
        lo, hi = min(sides.values()), max(sides.values())
        assert p.min() >= lo - 1e-9 and p.max() <= hi + 1e-9


def test_solver_input_validation():
    grid = GridSpec(4, 4, 1)
    perm = np.full(grid.shape, 10.0)
    with pytest.raises(ConfigurationError):
        solve_darcy_pressure(perm, grid, None)  # no pressure datum
    with pytest.raises(ConfigurationError):
        solve_darcy_pressure(perm, grid, {"q+": 1.0})
    with pytest.raises(ConfigurationError):
        solve_darcy_pressure(perm, grid, {"z-": 1.0})  # 2-D grid
    with pytest.raises(ConfigurationError):
        solve_darcy_pressure(np.full((3, 3, 1), 10.0), grid, 1.0)
    with pytest.raises(ConfigurationError):
        solve_darcy_pressure(perm * -1, grid, 1.0)
    with pytest.raises(ConfigurationError):
        solve_darcy_pressure(perm, grid, 1.0, [WellSpec(9, 0, 0)])
