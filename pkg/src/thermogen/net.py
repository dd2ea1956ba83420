"""Conditional denoiser backbone: a U-Net with residual blocks, group
normalization, swish activations and self-attention at configured feature-map
resolutions, conditioned on the noise level through a Fourier embedding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .forward import group_norm


@dataclass(frozen=True)
class DenoiserConfig:
    image_size: int = 128
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 2, 2)
    blocks_per_resolution: int = 2
    attention_resolutions: tuple[int, ...] = (16,)
    in_channels: int = 3   # noisy target + [bh, coarse lst] conditioning
    out_channels: int = 1

    def __post_init__(self) -> None:
        if not self.channel_multipliers:
            raise ValueError("channel_multipliers must be non-empty")
        for res in self.attention_resolutions:
            if res < 1 or self.image_size % res:
                raise ValueError(
                    f"attention resolution {res} must divide image size {self.image_size}")


class NoiseEmbedding(nn.Module):
    """Fourier features of log(sigma)/4 followed by a two-layer MLP."""

    def __init__(self, channels: int, dim: int):
        super().__init__()
        self.channels = channels
        self.mlp = nn.Sequential(nn.Linear(channels, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, sigma: torch.Tensor) -> torch.Tensor:
        c_noise = torch.log(sigma) / 4.0
        half = self.channels // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, dtype=c_noise.dtype, device=c_noise.device) / half
        )
        args = c_noise[:, None] * freqs[None, :]
        emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
        return self.mlp(emb)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, emb_dim: int):
        super().__init__()
        self.norm1 = group_norm(c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, c_out)
        self.norm2 = group_norm(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(nn.functional.silu(self.norm1(x)))
        h = h + self.emb_proj(emb)[:, :, None, None]
        h = self.conv2(nn.functional.silu(self.norm2(h)))
        return h + self.skip(x)


class SelfAttention2d(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.norm = group_norm(channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(1)
        attn = torch.softmax(q.transpose(1, 2) @ k / math.sqrt(c), dim=-1)
        out = (v @ attn.transpose(1, 2)).reshape(b, c, h, w)
        return x + self.proj(out)


class CondDenoiser(nn.Module):
    """Predicts the preconditioned residual from (scaled noisy target || conditioning)."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        c0 = config.base_channels
        emb_dim = 4 * c0
        self.embed = NoiseEmbedding(c0, emb_dim)
        self.stem = nn.Conv2d(config.in_channels, c0, 3, padding=1)

        chans = [c0 * m for m in config.channel_multipliers]
        self.down = nn.ModuleList()
        skip_chans = [c0]
        c_cur = c0
        res = config.image_size
        for level, c_next in enumerate(chans):
            for _ in range(config.blocks_per_resolution):
                block = nn.ModuleList([ResBlock(c_cur, c_next, emb_dim)])
                if res in config.attention_resolutions:
                    block.append(SelfAttention2d(c_next))
                self.down.append(block)
                c_cur = c_next
                skip_chans.append(c_cur)
            if level < len(chans) - 1:
                self.down.append(nn.ModuleList([nn.Conv2d(c_cur, c_cur, 3, stride=2, padding=1)]))
                skip_chans.append(c_cur)
                res //= 2

        self.mid_block1 = ResBlock(c_cur, c_cur, emb_dim)
        self.mid_attn = SelfAttention2d(c_cur)
        self.mid_block2 = ResBlock(c_cur, c_cur, emb_dim)

        self.up = nn.ModuleList()
        for level, c_next in reversed(list(enumerate(chans))):
            for _ in range(config.blocks_per_resolution + 1):
                block = nn.ModuleList([ResBlock(c_cur + skip_chans.pop(), c_next, emb_dim)])
                if res in config.attention_resolutions:
                    block.append(SelfAttention2d(c_next))
                self.up.append(block)
                c_cur = c_next
            if level > 0:
                self.up.append(nn.ModuleList([nn.Conv2d(c_cur, c_cur, 3, padding=1)]))
                res *= 2

        self.out_norm = group_norm(c_cur)
        self.out_conv = nn.Conv2d(c_cur, config.out_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, x: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
        emb = self.embed(sigma)
        h = self.stem(x)
        skips = [h]
        for stage in self.down:
            if isinstance(stage[0], nn.Conv2d):
                h = stage[0](h)
            else:
                h = stage[0](h, emb)
                for extra in stage[1:]:
                    h = extra(h)
            skips.append(h)
        h = self.mid_block2(self.mid_attn(self.mid_block1(h, emb)), emb)
        for stage in self.up:
            if isinstance(stage[0], nn.Conv2d):
                h = stage[0](nn.functional.interpolate(h, scale_factor=2, mode="nearest"))
            else:
                h = stage[0](torch.cat([h, skips.pop()], dim=1), emb)
                for extra in stage[1:]:
                    h = extra(h)
        return self.out_conv(nn.functional.silu(self.out_norm(h)))
