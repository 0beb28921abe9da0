"""Factorized spatio-temporal U-Net noise predictor.

Every spatial layer (conv residual block or spatial attention) is followed by
a temporal layer (temporal conv + temporal attention over the time axis at
each spatial location). Temporal attention keys/values can be augmented with
a local window of first-frame features so every location can consult nearby
first-frame content. Conditioning (graph embedding per frame) is projected
and summed with the timestep embedding, entering each residual block as a
per-frame channel bias. Coordinate channels at the stem plus learned
positional embeddings inside attention give the network the absolute
geometry needed to place content from a global embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn
from torch.nn import functional as F


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(
        -math.log(10_000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


def first_frame_neighborhoods(ff: torch.Tensor, radius: int) -> torch.Tensor:
    """(B, C, H, W) -> (B, H*W, (2r+1)^2, C): zero-padded spatial windows."""
    b, c, h, w = ff.shape
    k = 2 * radius + 1
    cols = F.unfold(ff, kernel_size=k, padding=radius)  # (B, C*k*k, H*W)
    return cols.view(b, c, k * k, h * w).permute(0, 3, 2, 1)


class WindowedTemporalAttention(nn.Module):
    """Attention over time per spatial location, with optional first-frame
    window augmentation of keys/values."""

    def __init__(self, channels: int, heads: int, n_frames: int,
                 window_radius: int = 1):
        super().__init__()
        if channels % heads != 0:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.heads = heads
        self.head_dim = channels // heads
        self.n_frames = n_frames
        self.window_radius = window_radius
        k = 2 * window_radius + 1
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(channels, channels)
        self.v = nn.Linear(channels, channels)
        self.out = nn.Linear(channels, channels)
        self.time_pos = nn.Parameter(torch.zeros(n_frames, channels))
        self.window_pos = nn.Parameter(torch.zeros(k * k, channels))
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def key_count(self, include_window: bool) -> int:
        k = 2 * self.window_radius + 1
        return self.n_frames + (k * k if include_window else 0)

    def forward(self, x: torch.Tensor, include_window: bool = True,
                first_frame: torch.Tensor | None = None) -> torch.Tensor:
        b, c, n, h, w = x.shape
        tokens = x.permute(0, 3, 4, 2, 1).reshape(b * h * w, n, c)
        posed = tokens + self.time_pos[:n]
        q = self.q(posed)
        k_t = self.k(posed)
        v_t = self.v(tokens)
        if include_window:
            ff = x[:, :, 0] if first_frame is None else first_frame
            neigh = first_frame_neighborhoods(ff, self.window_radius)
            neigh = neigh.reshape(b * h * w, -1, c)
            k_w = self.k(neigh + self.window_pos)
            v_w = self.v(neigh)
            keys = torch.cat([k_t, k_w], dim=1)
            values = torch.cat([v_t, v_w], dim=1)
        else:
            keys, values = k_t, v_t

        def split(t_):
            return t_.view(t_.shape[0], t_.shape[1], self.heads, self.head_dim).transpose(1, 2)

        attn = torch.softmax(
            (split(q) / math.sqrt(self.head_dim)) @ split(keys).transpose(-1, -2), dim=-1
        )
        mixed = (attn @ split(values)).transpose(1, 2).reshape(b * h * w, n, c)
        out = self.out(mixed)
        return out.view(b, h, w, n, c).permute(0, 4, 3, 1, 2)


class TemporalConv(nn.Module):
    """Residual 1-D conv over the time axis at every spatial location."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.GroupNorm(8, channels)
        self.conv = nn.Conv1d(channels, channels, 3, padding=1)
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, n, h, w = x.shape
        flat = self.norm(x.reshape(b, c, n * h * w)).view(b, c, n, h, w)
        flat = flat.permute(0, 3, 4, 1, 2).reshape(b * h * w, c, n)
        out = self.conv(F.silu(flat)).view(b, h, w, c, n).permute(0, 3, 4, 1, 2)
        return x + out


class TemporalBlock(nn.Module):
    """One temporal layer: temporal conv then (window-augmented) attention."""

    def __init__(self, channels: int, heads: int, n_frames: int,
                 window_radius: int, use_window: bool):
        super().__init__()
        self.use_window = use_window
        self.tconv = TemporalConv(channels)
        self.norm = nn.GroupNorm(8, channels)
        self.attn = WindowedTemporalAttention(channels, heads, n_frames, window_radius)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.tconv(x)
        b, c, n, h, w = x.shape
        normed = self.norm(x.reshape(b, c, n * h * w)).view(b, c, n, h, w)
        return x + self.attn(normed, include_window=self.use_window)


class SpatialResBlock(nn.Module):
    """Per-frame 2-D conv residual block with per-frame embedding bias."""

    def __init__(self, in_ch: int, out_ch: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, out_ch)
        self.norm2 = nn.GroupNorm(8, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        b, c, n, h, w = x.shape
        flat = x.permute(0, 2, 1, 3, 4).reshape(b * n, c, h, w)
        out = self.conv1(F.silu(self.norm1(flat)))
        bias = self.emb_proj(F.silu(emb)).reshape(b * n, -1)
        out = out + bias[:, :, None, None]
        out = self.conv2(F.silu(self.norm2(out)))
        out = self.skip(flat) + out
        return out.view(b, n, -1, h, w).permute(0, 2, 1, 3, 4)


class SpatialAttention(nn.Module):
    """Per-frame attention over spatial tokens with learned 2-D positions."""

    def __init__(self, channels: int, heads: int, resolution: int):
        super().__init__()
        self.heads = heads
        self.head_dim = channels // heads
        self.norm = nn.GroupNorm(8, channels)
        self.qkv = nn.Linear(channels, channels * 3)
        self.out = nn.Linear(channels, channels)
        self.pos = nn.Parameter(torch.zeros(resolution * resolution, channels))
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, n, h, w = x.shape
        normed = self.norm(x.reshape(b, c, n * h * w)).view(b, c, n, h, w)
        tokens = normed.permute(0, 2, 3, 4, 1).reshape(b * n, h * w, c)
        q, k, v = self.qkv(tokens + self.pos[: h * w]).chunk(3, dim=-1)

        def split(t_):
            return t_.view(t_.shape[0], t_.shape[1], self.heads, self.head_dim).transpose(1, 2)

        attn = torch.softmax(
            (split(q) / math.sqrt(self.head_dim)) @ split(k).transpose(-1, -2), dim=-1
        )
        mixed = (attn @ split(v)).transpose(1, 2).reshape(b * n, h * w, c)
        out = self.out(mixed).view(b, n, h, w, c).permute(0, 4, 1, 2, 3)
        return x + out


class FactorBlock(nn.Module):
    """Spatial layer(s), each immediately followed by a temporal layer."""

    def __init__(self, in_ch: int, out_ch: int, emb_dim: int, heads: int,
                 n_frames: int, window_radius: int, use_window: bool,
                 spatial_attn: bool, resolution: int):
        super().__init__()
        self.res = SpatialResBlock(in_ch, out_ch, emb_dim)
        self.temp1 = TemporalBlock(out_ch, heads, n_frames, window_radius, use_window)
        self.sattn = SpatialAttention(out_ch, heads, resolution) if spatial_attn else None
        self.temp2 = (
            TemporalBlock(out_ch, heads, n_frames, window_radius, use_window)
            if spatial_attn else None
        )

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        x = self.temp1(self.res(x, emb))
        if self.sattn is not None:
            x = self.temp2(self.sattn(x))
        return x


class Downsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, n, h, w = x.shape
        flat = x.permute(0, 2, 1, 3, 4).reshape(b * n, c, h, w)
        out = self.conv(flat)
        return out.view(b, n, c, h // 2, w // 2).permute(0, 2, 1, 3, 4)


class Upsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, n, h, w = x.shape
        flat = x.permute(0, 2, 1, 3, 4).reshape(b * n, c, h, w)
        out = self.conv(F.interpolate(flat, scale_factor=2, mode="nearest"))
        return out.view(b, n, c, h * 2, w * 2).permute(0, 2, 1, 3, 4)


@dataclass
class DenoiserConfig:
    latent_channels: int = 4
    resolution: int = 16  # latent H = W at full scale
    n_frames: int = 16
    base_width: int = 32
    width_mult: tuple = (1, 2)
    emb_dim: int = 128
    heads: int = 4
    cond_dim: int = 128
    window_radius: int = 1
    use_first_frame_window: bool = True
    attn_levels: tuple = (1,)
    coord_channels: bool = True


class VideoDenoiser(nn.Module):
    """Two-level factorized U-Net predicting the injected noise."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        if len(config.width_mult) != 2:
            raise ValueError("this denoiser is fixed at two resolution levels")
        self.config = config
        c = config
        w0, w1 = (c.base_width * m for m in c.width_mult)
        res0, res1 = c.resolution, c.resolution // 2
        in_ch = c.latent_channels + (2 if c.coord_channels else 0)

        self.time_mlp = nn.Sequential(
            nn.Linear(c.emb_dim, c.emb_dim), nn.SiLU(),
            nn.Linear(c.emb_dim, c.emb_dim),
        )
        self.cond_proj = nn.Linear(c.cond_dim, c.emb_dim)

        def block(i, o, level, res):
            return FactorBlock(
                i, o, c.emb_dim, c.heads, c.n_frames, c.window_radius,
                c.use_first_frame_window, level in c.attn_levels, res,
            )

        self.stem = nn.Conv2d(in_ch, w0, 3, padding=1)
        self.enc0 = block(w0, w0, 0, res0)
        self.down = Downsample(w0)
        self.enc1 = block(w0, w1, 1, res1)
        self.mid = block(w1, w1, 1, res1)
        self.dec1 = block(w1 + w1, w1, 1, res1)
        self.up = Upsample(w1)
        self.dec0 = block(w1 + w0, w0, 0, res0)
        self.head_norm = nn.GroupNorm(8, w0)
        self.head = nn.Conv2d(w0, c.latent_channels, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def _coords(self, b: int, n: int, h: int, w: int, device, dtype) -> torch.Tensor:
        ys = torch.linspace(-1, 1, h, device=device, dtype=dtype)
        xs = torch.linspace(-1, 1, w, device=device, dtype=dtype)
        grid = torch.stack(torch.meshgrid(ys, xs, indexing="ij"))  # (2, H, W)
        return grid[None, :, None].expand(b, 2, n, h, w)

    def forward(self, z: torch.Tensor, t: torch.Tensor,
                cond: torch.Tensor) -> torch.Tensor:
        b, c, n, h, w = z.shape
        if cond.shape[0] != b or cond.shape[1] != n:
            raise ValueError(
                f"conditioning shape {tuple(cond.shape)} does not match clip ({b}, {n}, ...)"
            )
        dtype = self.cond_proj.weight.dtype
        emb = self.time_mlp(timestep_embedding(t, self.config.emb_dim).to(dtype))
        emb = emb[:, None, :] + self.cond_proj(cond)  # (B, n, emb)

        x = z
        if self.config.coord_channels:
            x = torch.cat([x, self._coords(b, n, h, w, z.device, z.dtype)], dim=1)
        flat = x.permute(0, 2, 1, 3, 4).reshape(b * n, -1, h, w)
        x = self.stem(flat).view(b, n, -1, h, w).permute(0, 2, 1, 3, 4)

        h0 = self.enc0(x, emb)
        h1 = self.enc1(self.down(h0), emb)
        m = self.mid(h1, emb)
        d1 = self.dec1(torch.cat([m, h1], dim=1), emb)
        d0 = self.dec0(torch.cat([self.up(d1), h0], dim=1), emb)

        bn = b * n
        flat = d0.permute(0, 2, 1, 3, 4).reshape(bn, -1, h, w)
        out = self.head(F.silu(self.head_norm(flat)))
        return out.view(b, n, -1, h, w).permute(0, 2, 1, 3, 4)
