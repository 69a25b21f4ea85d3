"""Grid conventions and residual arithmetic shared by all components.

Tensor layout is channel-major everywhere:

* images:        float32 ``(batch, 3, H, W)`` with values in ``[-1, 1]``
* latent grids:  float32 ``(batch, D, h, w)`` with ``h = H / f`` and ``w = W / f``
* token grids:   int64 ``(batch, h, w)`` of codebook indices
* residual grids: same shape as latent grids, defined as latent minus its
  quantized version, so residual + quantized reconstructs the latent exactly.

Training runs in float32; these helpers never change dtype.
"""

from __future__ import annotations

import torch


def grid_shape(height: int, width: int, factor: int) -> tuple[int, int]:
    """Latent grid (h, w) for an image of the given size.

    Raises ValueError when the resolution is not divisible by the factor.
    """
    if height % factor != 0 or width % factor != 0:
        raise ValueError(
            f"resolution {height}x{width} not divisible by compression factor {factor}"
        )
    return height // factor, width // factor


def validate_image(img: torch.Tensor, factor: int | None = None) -> None:
    if img.ndim != 4 or img.shape[1] != 3:
        raise ValueError(f"expected (batch, 3, H, W) image tensor, got {tuple(img.shape)}")
    if not torch.isfinite(img).all():
        raise ValueError("image tensor contains non-finite values")
    if factor is not None:
        grid_shape(img.shape[2], img.shape[3], factor)


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def decompose(z: torch.Tensor, zq: torch.Tensor) -> torch.Tensor:
    """Residual grid: latent minus its quantized version."""
    _check_same_shape(z, zq)
    return z - zq


def recombine(zr: torch.Tensor, zq: torch.Tensor) -> torch.Tensor:
    """Latent grid recovered by summing residual and quantized grids."""
    _check_same_shape(zr, zq)
    return zr + zq
