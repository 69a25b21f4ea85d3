"""Inference pipeline: progressive unmasking of discrete tokens, residual
denoising from the final hidden states, summation, and decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .diffusion import DiffusionHead, NoiseSchedule, ResidualStats, denoise
from .errors import ConfigurationError, StateError
from .grids import recombine
from .quantizer import VectorQuantizer
from .tokenizer import HybridTokenizer
from .transformer import MaskState, MaskedTokenTransformer


@dataclass
class SamplerConfig:
    steps: int = 12                 # unmasking steps for discrete tokens
    temperature: float = 4.5        # confidence-noise scale, annealed to zero
    cfg_scale: float = 4.5
    cfg_schedule: str = "constant"
    diffusion_steps: int = 20
    seed: int = 0
    head_guidance: bool = True      # apply CFG inside the diffusion head too
    discrete_only: bool = False     # skip residual prediction (ablation)

    def __post_init__(self):
        if self.steps < 1 or self.cfg_scale < 0 or self.temperature < 0:
            raise ValueError("steps must be >= 1; scales must be non-negative")
        if self.cfg_schedule != "constant":
            raise ValueError("only the constant CFG schedule is supported")


def masked_after_step(n_tokens: int, total_steps: int, k: int) -> int:
    """Masked count after step k under the floor-cosine law, adjusted so every
    step unmasks at least one token."""
    masked = n_tokens
    for i in range(1, k + 1):
        target = math.floor(n_tokens * math.cos(math.pi * i / (2 * total_steps)))
        masked = max(0, min(target, masked - 1))
    return masked


def unmask_schedule(n_tokens: int, steps: int) -> list[int]:
    """Per-step unmask counts; sums to n_tokens, each entry >= 1, mask empty
    after the final step."""
    if steps > n_tokens:
        raise ValueError("cannot run more steps than there are tokens")
    if steps < 1:
        raise ValueError("need at least one step")
    masked = [masked_after_step(n_tokens, steps, k) for k in range(steps + 1)]
    return [masked[k - 1] - masked[k] for k in range(1, steps + 1)]


def cfg_combine(cond_logits: torch.Tensor, uncond_logits: torch.Tensor,
                scale: float) -> torch.Tensor:
    """uncond + scale * (cond - uncond); scale 1 returns cond exactly."""
    if cond_logits.shape != uncond_logits.shape:
        raise ValueError("logit shapes differ")
    if scale == 1.0:
        return cond_logits
    return uncond_logits + scale * (cond_logits - uncond_logits)


def _forward_with_cfg(model: MaskedTokenTransformer, state: MaskState,
                      cond: torch.Tensor, scale: float):
    """One batched conditional+unconditional pass; returns combined logits and
    the (cond, uncond) hidden states."""
    b = cond.shape[0]
    doubled = MaskState(torch.cat([state.mask, state.mask]),
                        torch.cat([state.committed, state.committed]))
    null = model.null_for(b, cond.shape[1])
    logits, hidden = model(doubled, torch.cat([cond, null]))
    logits_c, logits_u = logits.chunk(2)
    hidden_c, hidden_u = hidden.chunk(2)
    return cfg_combine(logits_c, logits_u, scale), hidden_c, hidden_u


def sample_step(state: MaskState, model: MaskedTokenTransformer, cond: torch.Tensor,
                cfg: SamplerConfig, k: int, generator: torch.Generator) -> MaskState:
    """Step k of the unmasking schedule: sample tokens for all masked positions,
    score them by noisy log-probability confidence, and commit the most
    confident ones.  Committed positions are never revisited."""
    b, h, w = state.mask.shape
    n = h * w
    expected = masked_after_step(n, cfg.steps, k - 1)
    if not (state.masked_counts() == expected).all():
        raise StateError(
            f"mask count {state.masked_counts().tolist()} inconsistent with schedule"
            f" step {k} (expected {expected})"
        )

    logits, _, _ = _forward_with_cfg(model, state, cond, cfg.cfg_scale)
    probs = torch.softmax(logits, dim=-1)              # (B, n, vocab)
    flat_probs = probs.reshape(b * n, -1)
    sampled = torch.multinomial(flat_probs, 1, generator=generator).reshape(b, n)
    logprob = torch.log(torch.gather(flat_probs, 1, sampled.reshape(-1, 1))
                        .reshape(b, n).clamp_min(1e-20))

    tau_k = cfg.temperature * (1.0 - k / cfg.steps)
    uniform = torch.rand(b, n, generator=generator).clamp(1e-20, 1.0 - 1e-7)
    gumbel = -torch.log(-torch.log(uniform))
    confidence = logprob + tau_k * gumbel

    mask_flat = state.mask.reshape(b, n)
    confidence = confidence.masked_fill(~mask_flat, float("-inf"))
    commit_count = expected - masked_after_step(n, cfg.steps, k)

    new_state = state.clone()
    new_mask = new_state.mask.reshape(b, n)
    new_committed = new_state.committed.reshape(b, n)
    top = confidence.topk(commit_count, dim=1).indices
    for bi in range(b):
        new_committed[bi, top[bi]] = sampled[bi, top[bi]]
        new_mask[bi, top[bi]] = False
    return new_state


def check_compatible(model: MaskedTokenTransformer, head: DiffusionHead,
                     tokenizer: HybridTokenizer) -> None:
    if model.config.vocab != tokenizer.config.codebook_size:
        raise ConfigurationError(
            f"generator vocabulary {model.config.vocab} does not match codebook"
            f" size {tokenizer.config.codebook_size}"
        )
    if head.config.target_dim != tokenizer.config.latent_channels:
        raise ConfigurationError(
            f"diffusion head dim {head.config.target_dim} does not match latent"
            f" channels {tokenizer.config.latent_channels}"
        )


@torch.no_grad()
def generate(model: MaskedTokenTransformer, head: DiffusionHead,
             tokenizer: HybridTokenizer, schedule: NoiseSchedule,
             stats: ResidualStats | None, cond: torch.Tensor,
             grid: tuple[int, int], cfg: SamplerConfig,
             return_tokens: bool = False):
    """Full pipeline: unmask all discrete tokens over cfg.steps steps, extract
    hidden states from one extra pass on the completed grid, denoise residual
    tokens, sum with the dequantized tokens, and decode to images.

    Deterministic given cfg.seed.
    """
    check_compatible(model, head, tokenizer)
    if not cfg.discrete_only and stats is None:
        raise ConfigurationError("residual statistics required unless discrete_only")
    was_training = model.training
    model.eval()
    head.eval()
    tokenizer.eval()

    b = cond.shape[0]
    n = grid[0] * grid[1]
    unmask_schedule(n, cfg.steps)  # validates steps against the grid size
    generator = torch.Generator().manual_seed(cfg.seed)
    state = MaskState.fully_masked(b, grid)
    for k in range(1, cfg.steps + 1):
        state = sample_step(state, model, cond, cfg, k, generator)
    assert not state.mask.any()

    quantizer: VectorQuantizer = tokenizer.quantizer
    zq = quantizer.lookup(state.committed)

    if cfg.discrete_only:
        images = tokenizer.decode(zq)
    else:
        _, hidden_c, hidden_u = _forward_with_cfg(model, state, cond, cfg.cfg_scale)
        diff_seed = int(torch.randint(0, 2 ** 31 - 1, (1,), generator=generator).item())
        uncond = hidden_u if cfg.head_guidance and cfg.cfg_scale != 1.0 else None
        residual_vectors = denoise(head, hidden_c, schedule, cfg.diffusion_steps,
                                   diff_seed, stats=stats, uncond=uncond,
                                   guidance_scale=cfg.cfg_scale)
        zr = residual_vectors.transpose(1, 2).reshape(b, -1, grid[0], grid[1])
        images = tokenizer.decode(recombine(zr, zq))

    if was_training:
        model.train()
        head.train()
        tokenizer.train()
    if return_tokens:
        return images, state.committed
    return images
