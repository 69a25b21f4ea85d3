"""Fixed random-weight convolutional features.

One extractor backs both the perceptual term of the tokenizer loss and the
Frechet proxy metric, so the whole pipeline stays self-contained: weights are
drawn once from a seeded generator and never trained.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class RandomFeatureExtractor(nn.Module):
    """Three strided conv stages with GELU; weights seeded, frozen."""

    def __init__(self, seed: int = 1234, base_width: int = 32):
        super().__init__()
        widths = [base_width, base_width * 2, base_width * 4]
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(3, widths[0], 3, stride=2, padding=1),
                nn.Conv2d(widths[0], widths[1], 3, stride=2, padding=1),
                nn.Conv2d(widths[1], widths[2], 3, stride=2, padding=1),
            ]
        )
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for conv in self.convs:
                fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
                bound = 1.0 / math.sqrt(fan_in)
                conv.weight.uniform_(-bound, bound, generator=gen)
                conv.bias.zero_()
        for p in self.parameters():
            p.requires_grad_(False)
        self.feature_dim = sum(widths)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            x = F.gelu(conv(x))
            feats.append(x)
        return feats

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        """Spatially averaged features of every stage, concatenated (B, feature_dim)."""
        return torch.cat([f.mean(dim=(2, 3)) for f in self.forward(x)], dim=1)


def feature_distance(extractor: RandomFeatureExtractor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean squared distance in the extractor's feature spaces (differentiable)."""
    fa = extractor(a)
    fb = extractor(b)
    return torch.stack([(x - y).pow(2).mean() for x, y in zip(fa, fb)]).mean()
