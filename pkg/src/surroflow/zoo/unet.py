"""Encoder-decoder families that emit all timesteps as output channels.

Both use three resolution levels with channel multipliers (1, 2, 4) and an
(8 * base_channels) bottleneck. Decoder stages upsample with transposed
convolutions (kernel 4, stride 2) and center-crop/pad to the skip's spatial
size, so grid dims need not be divisible by 8.
"""

from typing import Tuple

import torch
import torch.nn as nn

from surroflow.zoo.blocks import (
    ConvBlock,
    ResidualBlock,
    center_match,
    conv_nd,
    conv_transpose_nd,
)

MULTS = (1, 2, 4, 8)


class UNet(nn.Module):
    """Plain U-Net: double conv per stage, max-pool downsampling."""

    def __init__(self, out_channels: int, base_channels: int = 16,
                 norm: str = "group", ndim: int = 2, in_channels: int = 1):
        super().__init__()
        widths = [base_channels * m for m in MULTS]
        pool = {2: nn.MaxPool2d, 3: nn.MaxPool3d}[ndim]
        self.pool = pool(2)
        self.enc = nn.ModuleList()
        cin = in_channels
        for w in widths[:3]:
            self.enc.append(nn.Sequential(ConvBlock(cin, w, ndim, norm),
                                          ConvBlock(w, w, ndim, norm)))
            cin = w
        self.bottleneck = nn.Sequential(ConvBlock(widths[2], widths[3], ndim, norm),
                                        ConvBlock(widths[3], widths[3], ndim, norm))
        self.ups = nn.ModuleList()
        self.dec = nn.ModuleList()
        for hi, lo in zip(widths[:0:-1], widths[2::-1]):
            self.ups.append(conv_transpose_nd(ndim)(hi, lo, 4, stride=2, padding=1))
            self.dec.append(nn.Sequential(ConvBlock(2 * lo, lo, ndim, norm),
                                          ConvBlock(lo, lo, ndim, norm)))
        self.head = conv_nd(ndim)(widths[0], out_channels, 1)

    def forward(self, x):
        skips = []
        for stage in self.enc:
            x = stage(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.ups, self.dec, reversed(skips)):
            x = center_match(up(x), skip.shape[2:])
            x = dec(torch.cat([x, skip], dim=1))
        return self.head(x)


class ResUNetCore(nn.Module):
    """Residual U-Net encoder/decoder, reusable with a custom bottleneck."""

    def __init__(self, out_channels: int, base_channels: int = 16,
                 norm: str = "group", ndim: int = 2, in_channels: int = 1):
        super().__init__()
        widths = [base_channels * m for m in MULTS]
        self.stem = conv_nd(ndim)(in_channels, widths[0], 3, padding=1)
        self.enc = nn.ModuleList()
        self.downs = nn.ModuleList()
        for w, nxt in zip(widths[:3], widths[1:]):
            self.enc.append(nn.Sequential(ResidualBlock(w, w, ndim, norm),
                                          ResidualBlock(w, w, ndim, norm)))
            self.downs.append(conv_nd(ndim)(w, nxt, 3, stride=2, padding=1))
        self.bottleneck = nn.Sequential(ResidualBlock(widths[3], widths[3], ndim, norm),
                                        ResidualBlock(widths[3], widths[3], ndim, norm))
        self.ups = nn.ModuleList()
        self.dec = nn.ModuleList()
        for hi, lo in zip(widths[:0:-1], widths[2::-1]):
            self.ups.append(conv_transpose_nd(ndim)(hi, lo, 4, stride=2, padding=1))
            self.dec.append(ResidualBlock(2 * lo, lo, ndim, norm))
        self.head = conv_nd(ndim)(widths[0], out_channels, 1)

    def encode(self, x) -> Tuple[torch.Tensor, list]:
        x = self.stem(x)
        skips = []
        for stage, down in zip(self.enc, self.downs):
            x = stage(x)
            skips.append(x)
            x = down(x)
        return x, skips

    def decode(self, x, skips):
        for up, dec, skip in zip(self.ups, self.dec, reversed(skips)):
            x = center_match(up(x), skip.shape[2:])
            x = dec(torch.cat([x, skip], dim=1))
        return self.head(x)

    def forward(self, x):
        x, skips = self.encode(x)
        x = self.bottleneck(x)
        return self.decode(x, skips)


class ResUNet(ResUNetCore):
    """Residual U-Net emitting timesteps as output channels."""
