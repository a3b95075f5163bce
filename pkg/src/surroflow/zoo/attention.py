"""CNN encoder with a causal transformer rolling out the timestep tokens."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from surroflow.zoo.blocks import ConvBlock, center_match, conv_nd, conv_transpose_nd


class CausalBlock(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d)
        self.attn = nn.MultiheadAttention(d, heads, batch_first=True)
        self.ln2 = nn.LayerNorm(d)
        self.mlp = nn.Sequential(nn.Linear(d, 4 * d), nn.ReLU(inplace=True),
                                 nn.Linear(4 * d, d))

    def forward(self, x, mask):
        h = self.ln1(x)
        x = x + self.attn(h, h, h, attn_mask=mask, need_weights=False)[0]
        return x + self.mlp(self.ln2(x))


class CNNTransformer(nn.Module):
    """Tokens = pooled CNN latent + learned step embeddings; causal attention
    evolves them and a FiLM-modulated shared decoder renders each step."""

    def __init__(self, n_timesteps: int, base_channels: int = 16,
                 norm: str = "group", transformer_layers: int = 2,
                 transformer_heads: int = 4, ndim: int = 2, in_channels: int = 1):
        super().__init__()
        self.n_timesteps = n_timesteps
        widths = [base_channels * m for m in (1, 2, 4, 8)]
        conv = conv_nd(ndim)
        self.stem = ConvBlock(in_channels, widths[0], ndim, norm)
        self.downs = nn.ModuleList()
        self.stages = nn.ModuleList()
        for w, nxt in zip(widths[:3], widths[1:]):
            self.downs.append(conv(w, nxt, 3, stride=2, padding=1))
            self.stages.append(ConvBlock(nxt, nxt, ndim, norm))

        d = widths[3]
        self.step_emb = nn.Embedding(n_timesteps, d)
        self.blocks = nn.ModuleList(
            [CausalBlock(d, transformer_heads) for _ in range(transformer_layers)])
        self.film = nn.Linear(d, 2 * d)

        self.ups = nn.ModuleList()
        self.dec = nn.ModuleList()
        for hi, lo in zip(widths[:0:-1], widths[2::-1]):
            self.ups.append(conv_transpose_nd(ndim)(hi, lo, 4, stride=2, padding=1))
            self.dec.append(ConvBlock(lo, lo, ndim, norm))
        self.head = conv(widths[0], 1, 1)

    def forward(self, x):
        feats = self.stem(x)
        sizes = []
        for down, stage in zip(self.downs, self.stages):
            sizes.append(feats.shape[2:])
            feats = stage(F.relu(down(feats)))

        pool_dims = tuple(range(2, feats.ndim))
        z = feats.mean(dim=pool_dims)
        steps = torch.arange(self.n_timesteps, device=x.device)
        tokens = z[:, None, :] + self.step_emb(steps)[None]
        t = self.n_timesteps
        mask = torch.full((t, t), float("-inf"), device=x.device).triu(1)
        for block in self.blocks:
            tokens = block(tokens, mask)

        frames = []
        brd = (...,) + (None,) * len(pool_dims)
        for k in range(t):
            gamma, beta = self.film(tokens[:, k]).chunk(2, dim=1)
            h = feats * (1 + gamma[brd]) + beta[brd]
            for up, dec, size in zip(self.ups, self.dec, reversed(sizes)):
                h = dec(center_match(F.relu(up(h)), size))
            frames.append(self.head(h))
        return torch.cat(frames, dim=1)
