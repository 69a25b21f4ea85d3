"""Fully convolutional encoder/decoder with a discrete and a continuous
reconstruction path through a shared latent space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .grids import grid_shape, validate_image
from .quantizer import VectorQuantizer, straight_through


@dataclass
class TokenizerConfig:
    compression_factor: int = 8
    latent_channels: int = 8
    base_width: int = 64
    stage_depths: list[int] = field(default_factory=lambda: [1, 1, 1])
    codebook_size: int = 512

    def __post_init__(self):
        f = self.compression_factor
        if f < 4 or (f & (f - 1)) != 0:
            raise ValueError("compression_factor must be a power of two >= 4")
        if len(self.stage_depths) != self.num_stages:
            raise ValueError(
                f"stage_depths must have log2(f) = {self.num_stages} entries,"
                f" got {len(self.stage_depths)}"
            )

    @property
    def num_stages(self) -> int:
        return int(math.log2(self.compression_factor))

    def stage_width(self, i: int) -> int:
        return self.base_width * (2 ** i)


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = _norm(channels)
        self.norm2 = _norm(channels)

    def forward(self, x):
        h = F.gelu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return F.gelu(x + h)


class SpaceToChannelDown(nn.Module):
    """Stride-2 conv downsample with a non-parametric space-to-channel shortcut:
    pixel-unshuffle quadruples the channels, then channel groups are averaged
    down to the target width."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1)
        if (4 * in_channels) % out_channels != 0:
            raise ValueError("space-to-channel shortcut needs 4*in divisible by out")
        self.group = 4 * in_channels // out_channels

    def forward(self, x):
        b, c, h, w = x.shape
        shortcut = F.pixel_unshuffle(x, 2)
        shortcut = shortcut.view(b, -1, self.group, h // 2, w // 2).mean(dim=2)
        return self.conv(x) + shortcut


class Encoder(nn.Module):
    def __init__(self, cfg: TokenizerConfig):
        super().__init__()
        layers: list[nn.Module] = [nn.Conv2d(3, cfg.base_width, 3, padding=1)]
        for i in range(cfg.num_stages):
            width = cfg.stage_width(i)
            layers += [ResBlock(width) for _ in range(cfg.stage_depths[i])]
            out_width = cfg.stage_width(i + 1)
            if i == cfg.num_stages - 1:
                layers.append(SpaceToChannelDown(width, out_width))
            else:
                layers.append(nn.Conv2d(width, out_width, 3, stride=2, padding=1))
        final = cfg.stage_width(cfg.num_stages)
        layers += [ResBlock(final), nn.Conv2d(final, cfg.latent_channels, 3, padding=1)]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Decoder(nn.Module):
    def __init__(self, cfg: TokenizerConfig):
        super().__init__()
        final = cfg.stage_width(cfg.num_stages)
        layers: list[nn.Module] = [nn.Conv2d(cfg.latent_channels, final, 3, padding=1), ResBlock(final)]
        for i in reversed(range(cfg.num_stages)):
            width = cfg.stage_width(i)
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(cfg.stage_width(i + 1), width, 3, padding=1),
            ]
            layers += [ResBlock(width) for _ in range(cfg.stage_depths[i])]
        layers.append(nn.Conv2d(cfg.base_width, 3, 3, padding=1))  # linear output
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class HybridTokenizer(nn.Module):
    """Encoder + decoder + codebook.  The decoder accepts both quantized and
    raw latents, which is what makes residual modelling possible downstream."""

    def __init__(self, config: TokenizerConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config)
        self.decoder = Decoder(config)
        self.quantizer = VectorQuantizer(config.codebook_size, config.latent_channels)

    def encode(self, img: torch.Tensor) -> torch.Tensor:
        validate_image(img, self.config.compression_factor)
        return self.encoder(img)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 4 or z.shape[1] != self.config.latent_channels:
            raise ValueError(
                f"expected (B, {self.config.latent_channels}, h, w) latent grid,"
                f" got {tuple(z.shape)}"
            )
        img = self.decoder(z)
        if not self.training:
            img = img.clamp(-1.0, 1.0)
        return img

    def reconstruct(self, img: torch.Tensor, path: str, update_usage: bool = True) -> torch.Tensor:
        z = self.encode(img)
        if path == "continuous":
            return self.decode(z)
        if path == "discrete":
            _, zq = self.quantizer.quantize(z, update_usage=update_usage)
            return self.decode(straight_through(z, zq))
        raise ValueError(f"unknown reconstruction path {path!r}")

    def token_grid_shape(self, height: int, width: int) -> tuple[int, int]:
        return grid_shape(height, width, self.config.compression_factor)
