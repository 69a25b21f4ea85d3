"""Per-token MLP denoiser for residual grids.

Each token position is denoised independently, conditioned on that position's
transformer hidden state.  Epsilon prediction with a cosine noise schedule;
residuals are channel-standardized before entering the diffusion process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError


@dataclass
class DiffusionHeadConfig:
    mlp_layers: int = 3
    hidden_width: int = 256
    train_timesteps: int = 1000
    sample_steps: int = 20
    target_dim: int = 8

    def __post_init__(self):
        if self.mlp_layers < 2:
            raise ValueError("mlp_layers must be >= 2")
        if self.sample_steps > self.train_timesteps:
            raise ValueError("sample_steps cannot exceed train_timesteps")


class NoiseSchedule:
    """Cosine cumulative-alpha schedule: alphas_cumprod[0] = 1, strictly
    decreasing, near zero at the final timestep."""

    def __init__(self, train_timesteps: int = 1000):
        t = torch.arange(train_timesteps + 1, dtype=torch.float64)
        s = 0.008
        f = torch.cos((t / train_timesteps + s) / (1 + s) * math.pi / 2) ** 2
        ac = (f / f[0]).clamp(min=1e-8)
        # enforce strict monotonicity after the clamp
        for i in range(1, len(ac)):
            if ac[i] >= ac[i - 1]:
                ac[i] = ac[i - 1] * (1 - 1e-9)
        self.alphas_cumprod = ac.float()
        self.train_timesteps = train_timesteps

    def sub_schedule(self, steps: int) -> list[int]:
        """Uniformly strided timesteps from T down to 0, length steps+1."""
        if steps < 1 or steps > self.train_timesteps:
            raise ValueError("steps must be in [1, train_timesteps]")
        ts = [round(self.train_timesteps * i / steps) for i in range(steps, -1, -1)]
        return ts


@dataclass
class ResidualStats:
    """Per-channel mean and standard deviation of residual grids."""

    mean: torch.Tensor  # (D,)
    std: torch.Tensor   # (D,)

    def __post_init__(self):
        if (self.std <= 0).any():
            bad = int((self.std <= 0).nonzero()[0].item())
            raise ValueError(f"non-positive std for channel {bad}")

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        shape = [1, -1] + [1] * (x.ndim - 2)
        return (x - self.mean.view(shape)) / self.std.view(shape)

    def denormalize(self, x: torch.Tensor) -> torch.Tensor:
        shape = [1, -1] + [1] * (x.ndim - 2)
        return x * self.std.view(shape) + self.mean.view(shape)


def add_noise(x0: torch.Tensor, t: torch.Tensor | int, eps: torch.Tensor,
              schedule: NoiseSchedule) -> torch.Tensor:
    """Forward process x_t = sqrt(a_t) x0 + sqrt(1 - a_t) eps."""
    t = torch.as_tensor(t, dtype=torch.long)
    if t.min() < 0 or t.max() > schedule.train_timesteps:
        raise ValueError("timestep out of range")
    ac = schedule.alphas_cumprod[t]
    while ac.ndim < x0.ndim:
        ac = ac.unsqueeze(-1)
    return ac.sqrt() * x0 + (1 - ac).sqrt() * eps


def _timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float().unsqueeze(1) * freqs.unsqueeze(0)
    return torch.cat([args.sin(), args.cos()], dim=1)


class AdaLNBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.norm = nn.LayerNorm(width, elementwise_affine=False)
        self.modulation = nn.Linear(width, 3 * width)
        self.linear = nn.Linear(width, width)

    def forward(self, x, c):
        shift, scale, gate = self.modulation(torch.nn.functional.silu(c)).chunk(3, dim=-1)
        h = self.norm(x) * (1 + scale) + shift
        return x + gate * self.linear(torch.nn.functional.silu(h))


class DiffusionHead(nn.Module):
    """MLP epsilon-predictor; timestep and hidden-state condition enter through
    adaptive layer norm."""

    def __init__(self, config: DiffusionHeadConfig, condition_width: int):
        super().__init__()
        self.config = config
        w = config.hidden_width
        self.in_proj = nn.Linear(config.target_dim, w)
        self.cond_proj = nn.Linear(condition_width, w)
        self.time_mlp = nn.Sequential(nn.Linear(w, w), nn.SiLU(), nn.Linear(w, w))
        self.blocks = nn.ModuleList([AdaLNBlock(w) for _ in range(config.mlp_layers)])
        self.out_norm = nn.LayerNorm(w, elementwise_affine=False)
        self.out_mod = nn.Linear(w, 2 * w)
        self.out_proj = nn.Linear(w, config.target_dim)

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        """x_t: (M, D) noised vectors; t: (M,) timesteps; cond: (M, width)."""
        w = self.config.hidden_width
        t_emb = _timestep_embedding(t, w).to(x_t.dtype)
        c = self.time_mlp(t_emb) + self.cond_proj(cond)
        h = self.in_proj(x_t)
        for block in self.blocks:
            h = block(h, c)
        shift, scale = self.out_mod(torch.nn.functional.silu(c)).chunk(2, dim=-1)
        h = self.out_norm(h) * (1 + scale) + shift
        return self.out_proj(h)


def diffusion_loss(head: DiffusionHead, x0: torch.Tensor, cond: torch.Tensor,
                   schedule: NoiseSchedule, stats: ResidualStats | None,
                   generator: torch.Generator,
                   noise: torch.Tensor | None = None,
                   timesteps: torch.Tensor | None = None) -> torch.Tensor:
    """Denoising loss: per-vector squared error between the drawn noise and the
    head's prediction, summed over channels and averaged over vectors.

    x0 holds raw residual vectors (M, D); normalization applies internally so
    the head always sees standardized targets.  ``noise`` and ``timesteps``
    exist for deterministic tests.
    """
    if stats is None:
        raise ConfigurationError("residual statistics required before diffusion training")
    x0 = stats.normalize(x0)
    m = x0.shape[0]
    if timesteps is None:
        timesteps = torch.randint(1, schedule.train_timesteps + 1, (m,), generator=generator)
    if noise is None:
        noise = torch.randn(x0.shape, generator=generator)
    x_t = add_noise(x0, timesteps, noise, schedule)
    pred = head(x_t, timesteps, cond)
    return (noise - pred).pow(2).sum(dim=1).mean()


def _position_streams(position_seeds: np.ndarray, batch: int, draws: int, dim: int) -> np.ndarray:
    """Independent standard-normal streams, one per (batch, position) pair.

    Shape (batch, n, draws, dim).  Each position owns its seed, so permuting
    positions together with their seeds permutes the streams identically.
    """
    n = len(position_seeds)
    out = np.empty((batch, n, draws, dim), dtype=np.float32)
    for p, seed in enumerate(position_seeds):
        for b in range(batch):
            ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(b,))
            gen = np.random.Generator(np.random.PCG64(ss))
            out[b, p] = gen.standard_normal((draws, dim), dtype=np.float32)
    return out


def default_position_seeds(base_seed: int, n_positions: int) -> np.ndarray:
    return np.random.SeedSequence(entropy=int(base_seed)).generate_state(n_positions)


@torch.no_grad()
def denoise(head: DiffusionHead, cond: torch.Tensor, schedule: NoiseSchedule,
            steps: int, base_seed: int, stats: ResidualStats | None = None,
            uncond: torch.Tensor | None = None, guidance_scale: float = 1.0,
            position_seeds: np.ndarray | None = None) -> torch.Tensor:
    """Reverse process over a uniformly strided sub-schedule.

    cond: (B, n, width) hidden states for the fully committed grid.  Returns
    (B, n, D) residual vectors, denormalized when stats are given.  Tokens are
    denoised independently: position p consumes only cond[:, p] and its own
    noise stream.  With ``uncond`` given, epsilon predictions are combined as
    uncond + scale * (cond - uncond).
    """
    if steps > schedule.train_timesteps:
        raise ValueError("steps cannot exceed the training schedule length")
    b, n, _ = cond.shape
    dim = head.config.target_dim
    if position_seeds is None:
        position_seeds = default_position_seeds(base_seed, n)
    if len(position_seeds) != n:
        raise ValueError("need one seed per token position")
    streams = torch.from_numpy(_position_streams(position_seeds, b, steps, dim))

    ts = schedule.sub_schedule(steps)
    ac = schedule.alphas_cumprod
    x = streams[:, :, 0].reshape(b * n, dim).clone()
    flat_cond = cond.reshape(b * n, -1)
    flat_uncond = uncond.reshape(b * n, -1) if uncond is not None else None

    for i in range(steps):
        t_now, t_next = ts[i], ts[i + 1]
        t_batch = torch.full((b * n,), t_now, dtype=torch.long)
        eps = head(x, t_batch, flat_cond)
        if flat_uncond is not None:
            eps_u = head(x, t_batch, flat_uncond)
            eps = eps_u + guidance_scale * (eps - eps_u)
        a_now, a_next = ac[t_now], ac[t_next]
        x0_hat = (x - (1 - a_now).sqrt() * eps) / a_now.sqrt()
        # ancestral step: sigma^2 = (1-a_next)/(1-a_now) * (1 - a_now/a_next)
        sigma = ((1 - a_next) / (1 - a_now) * (1 - a_now / a_next)).clamp(min=0).sqrt()
        dir_coef = (1 - a_next - sigma ** 2).clamp(min=0).sqrt()
        x = a_next.sqrt() * x0_hat + dir_coef * eps
        if i + 1 < steps:
            z = streams[:, :, i + 1].reshape(b * n, dim)
            x = x + sigma * z

    out = x.view(b, n, dim)
    if stats is not None:
        out = stats.denormalize(out.permute(0, 2, 1)).permute(0, 2, 1)
    return out
