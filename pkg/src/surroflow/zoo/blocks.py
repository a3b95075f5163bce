"""Building blocks shared by the model families (2-D and 3-D variants)."""

from typing import Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from surroflow.errors import ConfigurationError


def conv_nd(ndim: int):
    return {2: nn.Conv2d, 3: nn.Conv3d}[ndim]


def conv_transpose_nd(ndim: int):
    return {2: nn.ConvTranspose2d, 3: nn.ConvTranspose3d}[ndim]


def _group_count(channels: int, wanted: int = 8) -> int:
    g = min(wanted, channels)
    while channels % g:
        g -= 1
    return g


def make_norm(kind: str, channels: int, ndim: int) -> nn.Module:
    if kind == "group":
        return nn.GroupNorm(_group_count(channels), channels)
    if kind == "instance":
        cls = {2: nn.InstanceNorm2d, 3: nn.InstanceNorm3d}[ndim]
        return cls(channels, affine=True)
    raise ConfigurationError(f"unknown norm kind {kind!r}; expected group or instance")


def center_match(x: torch.Tensor, target: Sequence[int]) -> torch.Tensor:
    """Center crop/pad trailing spatial dims of ``x`` to ``target``."""
    spatial = x.shape[2:]
    pads = []
    for have, want in zip(reversed(spatial), reversed(target)):
        diff = want - have
        lo = diff // 2
        pads.extend([lo, diff - lo])
    if any(pads):
        x = F.pad(x, pads)
    return x


class ConvBlock(nn.Module):
    """conv3 -> norm -> relu."""

    def __init__(self, cin: int, cout: int, ndim: int, norm: str):
        super().__init__()
        self.conv = conv_nd(ndim)(cin, cout, 3, padding=1)
        self.norm = make_norm(norm, cout, ndim)

    def forward(self, x):
        return F.relu(self.norm(self.conv(x)))


class ResidualBlock(nn.Module):
    """Two conv3+norm layers with an identity (or 1x1-projected) skip."""

    def __init__(self, cin: int, cout: int, ndim: int, norm: str):
        super().__init__()
        conv = conv_nd(ndim)
        self.conv1 = conv(cin, cout, 3, padding=1)
        self.norm1 = make_norm(norm, cout, ndim)
        self.conv2 = conv(cout, cout, 3, padding=1)
        self.norm2 = make_norm(norm, cout, ndim)
        self.skip = conv(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x):
        h = F.relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return F.relu(h + self.skip(x))


class ConvLSTMCell(nn.Module):
    """Convolutional LSTM cell; gates from one conv over [input, hidden]."""

    def __init__(self, cin: int, hidden: int, ndim: int, kernel: int = 3):
        super().__init__()
        self.hidden = hidden
        self.gates = conv_nd(ndim)(cin + hidden, 4 * hidden, kernel,
                                   padding=kernel // 2)

    def init_state(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        shape = (x.shape[0], self.hidden) + tuple(x.shape[2:])
        zeros = x.new_zeros(shape)
        return zeros, zeros.clone()

    def forward(self, x, state):
        h, c = state
        gi, gf, go, gg = self.gates(torch.cat([x, h], dim=1)).chunk(4, dim=1)
        c = torch.sigmoid(gf) * c + torch.sigmoid(gi) * torch.tanh(gg)
        h = torch.sigmoid(go) * torch.tanh(c)
        return h, (h, c)


class CBAM(nn.Module):
    """Channel then spatial attention, applied multiplicatively."""

    def __init__(self, channels: int, ndim: int, reduction: int = 8):
        super().__init__()
        hidden = max(channels // reduction, 4)
        self.mlp = nn.Sequential(
            nn.Linear(channels, hidden), nn.ReLU(inplace=True),
            nn.Linear(hidden, channels))
        self.spatial = conv_nd(ndim)(2, 1, 7, padding=3)
        self._reduce_dims = tuple(range(2, 2 + ndim))

    def forward(self, x):
        avg = x.mean(dim=self._reduce_dims)
        peak = x.amax(dim=self._reduce_dims)
        ca = torch.sigmoid(self.mlp(avg) + self.mlp(peak))
        x = x * ca.reshape(ca.shape + (1,) * len(self._reduce_dims))
        sa = torch.sigmoid(self.spatial(torch.cat(
            [x.mean(dim=1, keepdim=True), x.amax(dim=1, keepdim=True)], dim=1)))
        return x * sa


class SpectralConv(nn.Module):
    """Fourier-space linear layer keeping the lowest ``modes`` per axis.

    Weights are stored as real (re, im) pairs so every parameter is float32.
    """

    def __init__(self, cin: int, cout: int, modes: Sequence[int]):
        super().__init__()
        self.cin, self.cout = cin, cout
        self.modes = tuple(modes)
        self.ndim = len(self.modes)
        if self.ndim not in (2, 3):
            raise ConfigurationError("SpectralConv supports 2 or 3 spatial dims")
        # One weight block per +/- frequency corner of the full axes (the
        # rfft axis keeps only non-negative frequencies).
        n_corners = 2 ** (self.ndim - 1)
        scale = 1.0 / (cin * cout)
        self.weights = nn.ParameterList([
            nn.Parameter(scale * torch.randn(cin, cout, *self.modes, 2))
            for _ in range(n_corners)
        ])

    def _corner_slices(self, freq_shape):
        m = self.modes
        corners = []
        full_axes = self.ndim - 1
        for bits in range(2 ** full_axes):
            sl = []
            for axis in range(full_axes):
                if (bits >> axis) & 1:
                    sl.append(slice(freq_shape[axis] - m[axis], freq_shape[axis]))
                else:
                    sl.append(slice(0, m[axis]))
            sl.append(slice(0, m[-1]))
            corners.append(tuple(sl))
        return corners

    def forward(self, x):
        spatial = x.shape[2:]
        for n, m in zip(spatial, self.modes):
            if n < 2 * m:
                raise ConfigurationError(
                    f"spatial dim {n} too small for {m} retained modes")
        dims = tuple(range(2, 2 + self.ndim))
        xf = torch.fft.rfftn(x, dim=dims)
        out = torch.zeros(x.shape[0], self.cout, *xf.shape[2:],
                          dtype=xf.dtype, device=x.device)
        eq = {2: "bixy,ioxy->boxy", 3: "bixyz,ioxyz->boxyz"}[self.ndim]
        for w, sl in zip(self.weights, self._corner_slices(xf.shape[2:])):
            block = (slice(None), slice(None)) + sl
            out[block] = torch.einsum(eq, xf[block], torch.view_as_complex(w))
        return torch.fft.irfftn(out, s=spatial, dim=dims)
