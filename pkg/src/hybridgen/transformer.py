"""Masked token transformer: embeds committed tokens with mask placeholders,
attends over the grid with condition cross-attention, and produces vocabulary
logits plus the final hidden states consumed by the residual denoiser."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class GeneratorConfig:
    layers: int = 6
    width: int = 256
    heads: int = 8
    vocab: int = 512
    condition_dim: int = 64
    max_grid: int = 8             # largest token grid side covered by pos. embeddings
    attention_dropout: float = 0.1
    condition_dropout: float = 0.1

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ValueError("width must be divisible by heads")


@dataclass
class MaskState:
    """Per-position mask flags plus committed token values.

    ``mask`` is (B, h, w) with True = still masked; ``committed`` holds token
    ids and is meaningful only where the mask is False.
    """

    mask: torch.Tensor
    committed: torch.Tensor

    def __post_init__(self):
        if self.mask.shape != self.committed.shape:
            raise ValueError("mask and committed shapes differ")

    @property
    def grid(self) -> tuple[int, int]:
        return self.mask.shape[1], self.mask.shape[2]

    def masked_counts(self) -> torch.Tensor:
        return self.mask.flatten(1).sum(dim=1)

    def clone(self) -> "MaskState":
        return MaskState(self.mask.clone(), self.committed.clone())

    @classmethod
    def fully_masked(cls, batch: int, grid: tuple[int, int]) -> "MaskState":
        h, w = grid
        return cls(torch.ones(batch, h, w, dtype=torch.bool),
                   torch.zeros(batch, h, w, dtype=torch.long))


def train_mask_count(n_tokens: int, u: float) -> int:
    """Number of positions to mask for a draw u in (0, 1]: ceil(n*cos(pi*u/2)),
    floored at one so every training step has something to predict."""
    return max(1, math.ceil(n_tokens * math.cos(math.pi * u / 2.0)))


def sample_train_mask(grid: tuple[int, int], generator: torch.Generator,
                      batch_size: int = 1, tokens: torch.Tensor | None = None) -> MaskState:
    """Random training mask: per sample, draw u ~ Uniform(0, 1] and mask
    train_mask_count positions chosen uniformly without replacement."""
    h, w = grid
    n = h * w
    if n < 1:
        raise ValueError("empty grid")
    mask = torch.zeros(batch_size, n, dtype=torch.bool)
    for b in range(batch_size):
        u = 1.0 - torch.rand((), generator=generator).item()  # (0, 1]
        count = train_mask_count(n, u)
        perm = torch.randperm(n, generator=generator)
        mask[b, perm[:count]] = True
    committed = tokens if tokens is not None else torch.zeros(batch_size, h, w, dtype=torch.long)
    return MaskState(mask.view(batch_size, h, w), committed)


def masked_ce_loss(logits: torch.Tensor, target: torch.Tensor, state: MaskState) -> torch.Tensor:
    """Mean cross-entropy over masked positions only; unmasked positions
    contribute exactly zero loss and zero gradient."""
    b, n, vocab = logits.shape
    flat_mask = state.mask.reshape(b, n)
    if not flat_mask.any():
        raise ValueError("mask selects no positions")
    sel_logits = logits[flat_mask]
    sel_target = target.reshape(b, n)[flat_mask]
    return F.cross_entropy(sel_logits, sel_target)


def condition_dropout(cond: torch.Tensor, null_condition: torch.Tensor, p: float,
                      generator: torch.Generator) -> torch.Tensor:
    """With probability p per sample, replace the sequence by the learned
    unconditional embedding (enables classifier-free guidance)."""
    if p <= 0:
        return cond
    b, length, _ = cond.shape
    drop = torch.rand(b, generator=generator) < p
    null = null_condition.expand(b, length, -1)
    return torch.where(drop.view(b, 1, 1), null, cond)


class TransformerBlock(nn.Module):
    def __init__(self, width: int, heads: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, heads, dropout=dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(width)
        self.cross = nn.MultiheadAttention(width, heads, dropout=dropout, batch_first=True)
        self.norm3 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width)
        )

    def forward(self, x, cond):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        h = self.norm2(x)
        x = x + self.cross(h, cond, cond, need_weights=False)[0]
        return x + self.mlp(self.norm3(x))


class MaskedTokenTransformer(nn.Module):
    """Bidirectional transformer over the token grid with cross-attention
    conditioning (no adaptive norms)."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c = config
        self.token_emb = nn.Embedding(c.vocab, c.width)
        self.mask_emb = nn.Parameter(torch.zeros(c.width))
        self.pos_emb = nn.Parameter(torch.zeros(1, c.width, c.max_grid, c.max_grid))
        self.null_condition = nn.Parameter(torch.zeros(1, 1, c.condition_dim))
        self.cond_in = nn.Linear(c.condition_dim, c.width)
        self.blocks = nn.ModuleList(
            [TransformerBlock(c.width, c.heads, c.attention_dropout) for _ in range(c.layers)]
        )
        self.final_norm = nn.LayerNorm(c.width)
        self.head = nn.Linear(c.width, c.vocab)
        nn.init.trunc_normal_(self.pos_emb, std=0.02)
        nn.init.trunc_normal_(self.mask_emb, std=0.02)
        nn.init.trunc_normal_(self.null_condition, std=0.02)

    def positional(self, grid: tuple[int, int]) -> torch.Tensor:
        """Center-crop of the learned 2D positional table for a (h, w) grid."""
        h, w = grid
        m = self.config.max_grid
        if h > m or w > m:
            raise ValueError(
                f"grid {grid} exceeds positional table {m}x{m}; call expand_max_grid first"
            )
        top = (m - h) // 2
        left = (m - w) // 2
        return self.pos_emb[:, :, top:top + h, left:left + w]

    @torch.no_grad()
    def expand_max_grid(self, new_size: int) -> None:
        """Bilinearly interpolate the positional table to a larger grid
        (used when fine-tuning at a higher resolution)."""
        if new_size <= self.config.max_grid:
            return
        grown = F.interpolate(self.pos_emb.data, size=(new_size, new_size),
                              mode="bilinear", align_corners=False)
        self.pos_emb = nn.Parameter(grown)
        self.config.max_grid = new_size

    def null_for(self, batch: int, length: int = 1) -> torch.Tensor:
        return self.null_condition.expand(batch, length, -1)

    def forward(self, state: MaskState, cond: torch.Tensor):
        """Returns (logits (B, h*w, vocab), hidden (B, h*w, width)).

        hidden is the final pre-logit representation; it later conditions the
        residual denoiser.
        """
        b, h, w = state.committed.shape
        if state.committed.max() >= self.config.vocab or state.committed.min() < 0:
            raise ValueError("token index outside vocabulary")
        if cond.ndim != 3 or cond.shape[0] != b or cond.shape[2] != self.config.condition_dim:
            raise ValueError(f"expected condition (B, L, {self.config.condition_dim})")

        emb = self.token_emb(state.committed.reshape(b, h * w))
        mask_flat = state.mask.reshape(b, h * w, 1)
        emb = torch.where(mask_flat, self.mask_emb.view(1, 1, -1).to(emb.dtype), emb)
        pos = self.positional((h, w)).flatten(2).transpose(1, 2)
        x = emb + pos

        cond_h = self.cond_in(cond)
        for block in self.blocks:
            x = block(x, cond_h)
        hidden = self.final_norm(x)
        return self.head(hidden), hidden
