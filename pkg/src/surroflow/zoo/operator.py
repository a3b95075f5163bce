"""Operator-learning families: spectral (FNO, UFNO) and branch-trunk."""

from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from surroflow.zoo.blocks import SpectralConv, center_match, conv_nd, conv_transpose_nd
from surroflow.zoo.unet import UNet


def _coord_channels(x: torch.Tensor) -> torch.Tensor:
    spatial = x.shape[2:]
    axes = [torch.linspace(0, 1, n, device=x.device, dtype=x.dtype) for n in spatial]
    mesh = torch.meshgrid(*axes, indexing="ij")
    coords = torch.stack(mesh)[None].expand(x.shape[0], -1, *spatial)
    return torch.cat([x, coords], dim=1)


class _MiniUNet(nn.Module):
    """Small local-refinement path used inside the later UFNO blocks."""

    def __init__(self, width: int, ndim: int):
        super().__init__()
        conv = conv_nd(ndim)
        self.down = conv(width, width, 3, stride=2, padding=1)
        self.mid = conv(width, width, 3, padding=1)
        self.up = conv_transpose_nd(ndim)(width, width, 4, stride=2, padding=1)
        self.merge = conv(2 * width, width, 1)

    def forward(self, x):
        h = F.relu(self.mid(F.relu(self.down(x))))
        h = center_match(self.up(h), x.shape[2:])
        return self.merge(torch.cat([x, h], dim=1))


class FNO(nn.Module):
    """Lift -> 4 spectral blocks with 1x1 bypass -> projection head."""

    def __init__(self, n_timesteps: int, base_channels: int = 16,
                 modes: Sequence[int] = (8, 8), ndim: int = 2,
                 in_channels: int = 1, unet_blocks: int = 0):
        super().__init__()
        width = 2 * base_channels
        conv = conv_nd(ndim)
        self.lift = conv(in_channels + ndim, width, 1)
        self.spectral = nn.ModuleList(
            [SpectralConv(width, width, modes) for _ in range(4)])
        self.bypass = nn.ModuleList([conv(width, width, 1) for _ in range(4)])
        self.local = nn.ModuleList(
            [_MiniUNet(width, ndim) if i >= 4 - unet_blocks else None
             for i in range(4)])
        self.proj1 = conv(width, 2 * width, 1)
        self.proj2 = conv(2 * width, n_timesteps, 1)

    def forward(self, x):
        x = self.lift(_coord_channels(x))
        for i, (spec, byp, loc) in enumerate(zip(self.spectral, self.bypass, self.local)):
            h = spec(x) + byp(x)
            if loc is not None:
                h = h + loc(x)
            x = F.relu(h) if i < 3 else h
        return self.proj2(F.relu(self.proj1(x)))


class UFNO(FNO):
    """FNO whose last two blocks add a parallel mini U-Net path."""

    def __init__(self, n_timesteps: int, base_channels: int = 16,
                 modes: Sequence[int] = (8, 8), ndim: int = 2, in_channels: int = 1):
        super().__init__(n_timesteps, base_channels, modes, ndim, in_channels,
                         unet_blocks=2)


class UDeepONet(nn.Module):
    """U-Net branch over the input field, MLP trunk over the timestep index."""

    def __init__(self, n_timesteps: int, base_channels: int = 16,
                 norm: str = "group", ndim: int = 2, in_channels: int = 1):
        super().__init__()
        self.n_timesteps = n_timesteps
        p = 2 * base_channels
        self.p = p
        self.branch = UNet(p, base_channels, norm, ndim, in_channels)
        self.trunk = nn.Sequential(nn.Linear(1, 64), nn.ReLU(inplace=True),
                                   nn.Linear(64, 64), nn.ReLU(inplace=True),
                                   nn.Linear(64, p))
        self.bias = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        spatial = x.shape[2:]
        branch = self.branch(x).flatten(2)
        steps = torch.linspace(0, 1, self.n_timesteps, device=x.device,
                               dtype=x.dtype)[:, None]
        trunk = self.trunk(steps)
        out = torch.einsum("bps,tp->bts", branch, trunk) / self.p + self.bias
        return out.reshape(x.shape[0], self.n_timesteps, *spatial)
