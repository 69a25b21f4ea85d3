"""Reconstruction and generation metrics.

PSNR and SSIM operate on [-1, 1] images (mapped to [0, 1] internally).  The
Frechet proxy replaces a pretrained-inception FID with features from the
package's fixed random-weight extractor; it is meaningful only for relative
comparisons between sets, never as an absolute number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import torch
import torch.nn.functional as F

from .features import RandomFeatureExtractor

PSNR_CAP_DB = 99.0


@dataclass
class MetricReport:
    psnr: float | None = None
    ssim: float | None = None
    fid_proxy: float | None = None
    codebook_utilization: float | None = None
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "fid_proxy": self.fid_proxy,
            "codebook_utilization": self.codebook_utilization,
            "counts": dict(self.counts),
        }


def _to_unit(img: torch.Tensor) -> torch.Tensor:
    return (img.float() + 1.0) / 2.0


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """10*log10(1/MSE) on the [0, 1] scale, capped at 99 dB for exact matches."""
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    mse = float((_to_unit(a) - _to_unit(b)).pow(2).mean().item())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return (g.unsqueeze(0) * g.unsqueeze(1)).float()


def ssim(a: torch.Tensor, b: torch.Tensor, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Windowed SSIM with a Gaussian window, averaged over batch and channels."""
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    if a.shape[-1] < window or a.shape[-2] < window:
        raise ValueError(f"image smaller than the {window}x{window} window")
    x = _to_unit(a)
    y = _to_unit(b)
    channels = x.shape[1]
    kernel = _gaussian_kernel(window, sigma).expand(channels, 1, window, window)

    def filt(t):
        return F.conv2d(t, kernel, groups=channels)

    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x ** 2
    var_y = filt(y * y) - mu_y ** 2
    cov = filt(x * y) - mu_x * mu_y
    c1 = k1 ** 2
    c2 = k2 ** 2
    s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    )
    return float(s.mean().item())


def frechet_distance(mu1: np.ndarray, cov1: np.ndarray,
                     mu2: np.ndarray, cov2: np.ndarray) -> float:
    """Frechet distance between two Gaussians."""
    mu1 = np.atleast_1d(mu1)
    mu2 = np.atleast_1d(mu2)
    cov1 = np.atleast_2d(cov1)
    cov2 = np.atleast_2d(cov2)
    diff = mu1 - mu2
    sqrt_prod, _ = scipy.linalg.sqrtm(cov1 @ cov2, disp=False)
    if np.iscomplexobj(sqrt_prod):
        sqrt_prod = sqrt_prod.real
    value = float(diff @ diff + np.trace(cov1 + cov2 - 2 * sqrt_prod))
    return max(0.0, value)


def _pooled_features(images: torch.Tensor, extractor: RandomFeatureExtractor,
                     batch_size: int = 64) -> np.ndarray:
    feats = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            feats.append(extractor.pooled(images[start:start + batch_size]).double().numpy())
    return np.concatenate(feats, axis=0)


def fid_proxy(set_a: torch.Tensor, set_b: torch.Tensor,
              extractor: RandomFeatureExtractor) -> float:
    """Frechet distance between Gaussian fits of pooled features of two image
    sets; covariance gets a 1e-6 diagonal regularizer."""
    if set_a.shape[0] < 2 or set_b.shape[0] < 2:
        raise ValueError("each set needs at least 2 samples")
    fa = _pooled_features(set_a, extractor)
    fb = _pooled_features(set_b, extractor)
    eye = np.eye(fa.shape[1]) * 1e-6
    mu_a, cov_a = fa.mean(axis=0), np.cov(fa, rowvar=False) + eye
    mu_b, cov_b = fb.mean(axis=0), np.cov(fb, rowvar=False) + eye
    return frechet_distance(mu_a, cov_a, mu_b, cov_b)
