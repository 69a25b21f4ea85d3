"""Generator training: masked-token cross-entropy plus the residual diffusion
loss, with AdamW, cosine learning-rate decay, and low-resolution weight reuse
for the two-resolution recipe."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .conditioning import ClassConditioner
from .diffusion import DiffusionHead, NoiseSchedule, ResidualStats, diffusion_loss
from .errors import ConfigurationError
from .tokenizer import HybridTokenizer
from .transformer import (MaskedTokenTransformer, condition_dropout,
                          masked_ce_loss, sample_train_mask)


@dataclass
class GeneratorTrainConfig:
    learning_rate: float = 1e-4
    betas: tuple = (0.9, 0.96)
    weight_decay: float = 0.03
    lr_schedule: str = "cosine"
    batch_size: int = 32
    steps_pretrain: int = 2000
    steps_finetune: int = 500     # 4:1 split with the pre-training budget
    ce_weight: float = 1.0
    diffusion_weight: float = 1.0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError("lr_schedule must be 'cosine' or 'constant'")


def cosine_lr(base: float, step: int, total: int) -> float:
    return base * 0.5 * (1.0 + math.cos(math.pi * min(step, total) / total))


def transfer_lowres_weights(target: MaskedTokenTransformer,
                            source: MaskedTokenTransformer) -> None:
    """Reuse all weights of a lower-resolution generator; the positional table
    is bilinearly interpolated up to the target grid."""
    src_cfg, tgt_cfg = source.config, target.config
    for name in ("layers", "width", "heads", "vocab", "condition_dim"):
        if getattr(src_cfg, name) != getattr(tgt_cfg, name):
            raise ConfigurationError(
                f"cannot reuse weights: {name} differs"
                f" ({getattr(src_cfg, name)} vs {getattr(tgt_cfg, name)})"
            )
    if src_cfg.max_grid > tgt_cfg.max_grid:
        raise ConfigurationError("source grid is larger than the target grid")
    state = {k: v.clone() for k, v in source.state_dict().items()}
    pos = state.pop("pos_emb")
    missing, unexpected = target.load_state_dict(state, strict=False)
    assert missing == ["pos_emb"] and not unexpected
    with torch.no_grad():
        grown = F.interpolate(pos, size=(tgt_cfg.max_grid, tgt_cfg.max_grid),
                              mode="bilinear", align_corners=False)
        target.pos_emb.copy_(grown)


class GeneratorTrainer:
    """Joint training of the mask transformer, the diffusion head, and the
    class conditioner on top of a frozen tokenizer."""

    def __init__(self, model: MaskedTokenTransformer, head: DiffusionHead,
                 conditioner: ClassConditioner, tokenizer: HybridTokenizer,
                 stats: ResidualStats, schedule: NoiseSchedule,
                 cfg: GeneratorTrainConfig, seed: int = 0):
        if model.config.vocab != tokenizer.config.codebook_size:
            raise ConfigurationError(
                f"generator vocabulary {model.config.vocab} does not match codebook"
                f" size {tokenizer.config.codebook_size}"
            )
        if stats is None:
            raise ConfigurationError("residual statistics are required for training")
        self.model = model
        self.head = head
        self.conditioner = conditioner
        self.tokenizer = tokenizer
        self.stats = stats
        self.schedule = schedule
        self.cfg = cfg
        self.generator = torch.Generator().manual_seed(seed)
        params = (list(model.parameters()) + list(head.parameters())
                  + list(conditioner.parameters()))
        self.opt = torch.optim.AdamW(params, lr=cfg.learning_rate, betas=cfg.betas,
                                     weight_decay=cfg.weight_decay)
        self.tokenizer.eval()
        for p in self.tokenizer.parameters():
            p.requires_grad_(False)
        self.history: list[dict] = []

    def _set_lr(self, step: int, total: int) -> float:
        lr = self.cfg.learning_rate
        if self.cfg.lr_schedule == "cosine":
            lr = cosine_lr(lr, step, total)
        for group in self.opt.param_groups:
            group["lr"] = lr
        return lr

    def train_step(self, images: torch.Tensor, labels: torch.Tensor) -> dict:
        with torch.no_grad():
            z = self.tokenizer.encode(images)
            indices, zq = self.tokenizer.quantizer.quantize(z, update_usage=False)
            residual = z - zq
        b, d, h, w = z.shape

        state = sample_train_mask((h, w), self.generator, batch_size=b, tokens=indices)
        cond = self.conditioner(labels)
        cond = condition_dropout(cond, self.model.null_condition,
                                 self.model.config.condition_dropout, self.generator)
        logits, hidden = self.model(state, cond)

        ce = masked_ce_loss(logits, indices, state)
        x0 = residual.permute(0, 2, 3, 1).reshape(-1, d)
        diff = diffusion_loss(self.head, x0, hidden.reshape(b * h * w, -1),
                              self.schedule, self.stats, self.generator)
        total = self.cfg.ce_weight * ce + self.cfg.diffusion_weight * diff

        self.opt.zero_grad()
        total.backward()
        self.opt.step()
        return {"ce": ce.item(), "diffusion": diff.item(), "total": total.item()}

    def train(self, images: torch.Tensor, labels: torch.Tensor, steps: int,
              log_prefix: dict | None = None) -> list[dict]:
        self.model.train()
        self.head.train()
        records = []
        for step in range(steps):
            lr = self._set_lr(step, steps)
            picks = torch.randint(0, images.shape[0], (self.cfg.batch_size,),
                                  generator=self.generator)
            report = self.train_step(images[picks], labels[picks])
            report.update(step=step, lr=lr)
            if log_prefix:
                report.update(log_prefix)
            records.append(report)
            self.history.append(report)
        return records
