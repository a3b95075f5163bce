"""Recurrent families: ConvLSTM state rolled over the output timesteps."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from surroflow.zoo.blocks import (
    CBAM,
    ConvBlock,
    ConvLSTMCell,
    center_match,
    conv_nd,
    conv_transpose_nd,
)
from surroflow.zoo.unet import ResUNetCore


class RecurrentRUNet(nn.Module):
    """Residual U-Net with a ConvLSTM bottleneck unrolled per timestep.

    The encoder runs once; the cell evolves the bottleneck state and the
    shared decoder renders each step against the same encoder skips.
    """

    def __init__(self, n_timesteps: int, base_channels: int = 16,
                 norm: str = "group", ndim: int = 2, in_channels: int = 1):
        super().__init__()
        self.n_timesteps = n_timesteps
        self.core = ResUNetCore(1, base_channels, norm, ndim, in_channels)
        hidden = base_channels * 8
        self.cell = ConvLSTMCell(hidden, hidden, ndim)

    def forward(self, x):
        latent, skips = self.core.encode(x)
        latent = self.core.bottleneck(latent)
        state = self.cell.init_state(latent)
        frames = []
        for _ in range(self.n_timesteps):
            h, state = self.cell(latent, state)
            frames.append(self.core.decode(h, skips))
        return torch.cat(frames, dim=1)


class EDConvLSTM(nn.Module):
    """Strided-conv encoder, ConvLSTM propagator, CBAM, shared deconv decoder."""

    def __init__(self, n_timesteps: int, base_channels: int = 16,
                 norm: str = "group", ndim: int = 2, in_channels: int = 1):
        super().__init__()
        self.n_timesteps = n_timesteps
        c1, c2 = base_channels, base_channels * 2
        conv = conv_nd(ndim)
        deconv = conv_transpose_nd(ndim)
        self.enc1 = conv(in_channels, c1, 3, stride=2, padding=1)
        self.enc2 = conv(c1, c2, 3, stride=2, padding=1)
        self.enc_block = ConvBlock(c2, c2, ndim, norm)
        self.cell = ConvLSTMCell(c2, c2, ndim)
        self.attn = CBAM(c2, ndim)
        self.up1 = deconv(c2, c1, 4, stride=2, padding=1)
        self.dec_block = ConvBlock(c1, c1, ndim, norm)
        self.up2 = deconv(c1, c1, 4, stride=2, padding=1)
        self.head = conv(c1, 1, 1)

    def forward(self, x):
        spatial = x.shape[2:]
        z = F.relu(self.enc1(x))
        mid = z.shape[2:]
        z = self.enc_block(F.relu(self.enc2(z)))
        state = self.cell.init_state(z)
        frames = []
        for _ in range(self.n_timesteps):
            h, state = self.cell(z, state)
            h = self.attn(h)
            d = self.dec_block(center_match(F.relu(self.up1(h)), mid))
            d = center_match(F.relu(self.up2(d)), spatial)
            frames.append(self.head(d))
        return torch.cat(frames, dim=1)
