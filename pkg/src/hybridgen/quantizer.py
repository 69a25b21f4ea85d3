"""Vector-quantization codebook: nearest-neighbour assignment, training losses,
straight-through gradients, and usage statistics."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class UsageReport:
    utilization: float  # fraction of entries assigned at least once since reset
    entropy: float      # Shannon entropy (nats) of the assignment distribution
    total: int          # vectors quantized since reset


class VectorQuantizer(nn.Module):
    """Codebook of ``num_entries`` vectors of dimension ``dim``.

    Assignment picks the entry with minimal squared Euclidean distance;
    equidistant entries resolve to the lowest index, so quantization is a
    pure function of the inputs.
    """

    def __init__(self, num_entries: int, dim: int, init_seed: int = 0):
        super().__init__()
        if num_entries < 2:
            raise ValueError("codebook needs at least 2 entries")
        gen = torch.Generator().manual_seed(init_seed)
        scale = 1.0 / num_entries
        entries = (torch.rand(num_entries, dim, generator=gen) * 2.0 - 1.0) * scale
        self.embedding = nn.Parameter(entries)
        self.register_buffer("usage_counts", torch.zeros(num_entries, dtype=torch.long))

    @property
    def num_entries(self) -> int:
        return self.embedding.shape[0]

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    def quantize(self, z: torch.Tensor, update_usage: bool = True):
        """Map a latent grid (B, D, h, w) to (indices (B, h, w), quantized grid).

        Quantized rows are exact copies of the selected codebook entries.
        """
        if z.ndim != 4 or z.shape[1] != self.dim:
            raise ValueError(
                f"expected (B, {self.dim}, h, w) latent grid, got {tuple(z.shape)}"
            )
        b, d, h, w = z.shape
        flat = z.permute(0, 2, 3, 1).reshape(-1, d)
        with torch.no_grad():
            # Exact squared distances; argmin returns the lowest index on ties.
            dist = (flat.unsqueeze(1) - self.embedding.unsqueeze(0)).pow(2).sum(-1)
            indices = dist.argmin(dim=1)
            if update_usage:
                self.usage_counts += torch.bincount(indices, minlength=self.num_entries)
        zq = self.embedding[indices].view(b, h, w, d).permute(0, 3, 1, 2).contiguous()
        return indices.view(b, h, w), zq

    def lookup(self, indices: torch.Tensor) -> torch.Tensor:
        """Dequantize a token grid (B, h, w) back to codebook vectors (B, D, h, w)."""
        if indices.min() < 0 or indices.max() >= self.num_entries:
            raise ValueError("token index outside codebook range")
        b, h, w = indices.shape
        return self.embedding[indices.reshape(-1)].view(b, h, w, self.dim).permute(0, 3, 1, 2).contiguous()

    def usage_report(self) -> UsageReport:
        counts = self.usage_counts
        total = int(counts.sum().item())
        used = int((counts > 0).sum().item())
        if total == 0:
            return UsageReport(utilization=0.0, entropy=0.0, total=0)
        p = counts[counts > 0].double() / total
        entropy = float(-(p * p.log()).sum().item())
        return UsageReport(utilization=used / self.num_entries, entropy=entropy, total=total)

    def reset_usage(self) -> None:
        self.usage_counts.zero_()

    @torch.no_grad()
    def reseed_dead_entries(self, samples: torch.Tensor, generator: torch.Generator) -> int:
        """Replace entries with zero usage since the last reset by random rows
        of ``samples`` (encoder outputs, shape (M, D)).  Returns the number of
        entries reseeded."""
        dead = (self.usage_counts == 0).nonzero(as_tuple=True)[0]
        if dead.numel() == 0 or samples.numel() == 0:
            return 0
        picks = torch.randint(0, samples.shape[0], (dead.numel(),), generator=generator)
        self.embedding[dead] = samples[picks].to(self.embedding.dtype)
        return int(dead.numel())


def vq_loss(z: torch.Tensor, zq: torch.Tensor, beta: float) -> torch.Tensor:
    """Codebook term plus beta-weighted commitment term, mean over elements."""
    if z.shape != zq.shape:
        raise ValueError(f"shape mismatch: {tuple(z.shape)} vs {tuple(zq.shape)}")
    if beta <= 0:
        raise ValueError("beta must be positive")
    codebook = (z.detach() - zq).pow(2).mean()
    commitment = (z - zq.detach()).pow(2).mean()
    return codebook + beta * commitment


def straight_through(z: torch.Tensor, zq: torch.Tensor) -> torch.Tensor:
    """Forward value equals zq bit-exactly; gradients pass to z unchanged.

    Written as zq + (z - z.detach()) so the forward path adds an exact zero
    instead of round-tripping zq through two float additions.
    """
    if z.shape != zq.shape:
        raise ValueError(f"shape mismatch: {tuple(z.shape)} vs {tuple(zq.shape)}")
    return zq.detach() + (z - z.detach())
