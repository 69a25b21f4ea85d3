"""Tokenizer training: reconstruction + GAN objective and the staged
adaptation schedule.

Stages
------
``continuous_warmup``   continuous path only; initializes the encoder for
                        reconstruction before any codebook pressure.
``discrete_learning``   discrete path only; trains the codebook and stabilizes
                        the discrete latent space.
``alternate_finetune``  per-image 50% coin flip between paths; encoder and
                        quantizer frozen, decoder only.
``alternate_joint``     same coin flip with everything trainable; exists only
                        as the ablation baseline strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError
from .features import RandomFeatureExtractor, feature_distance
from .quantizer import straight_through, vq_loss
from .tokenizer import HybridTokenizer

STAGE_WARMUP = "continuous_warmup"
STAGE_DISCRETE = "discrete_learning"
STAGE_FINETUNE = "alternate_finetune"
STAGE_JOINT = "alternate_joint"
STAGES = (STAGE_WARMUP, STAGE_DISCRETE, STAGE_FINETUNE, STAGE_JOINT)

STRATEGIES = ("three-stage", "no-warmup", "joint-alternate")


@dataclass
class TokenizerTrainConfig:
    l2_weight: float = 1.0
    l1_weight: float = 0.0
    perceptual_weight: float = 1.0
    gan_weight: float = 0.5
    vq_beta: float = 0.25
    learning_rate: float = 1e-4
    betas: tuple = (0.9, 0.95)
    batch_size: int = 32
    epochs_stage1: int = 3
    epochs_stage2: int = 12
    epochs_stage3: int = 3

    def __post_init__(self):
        self.betas = tuple(self.betas)
        for w in (self.l2_weight, self.l1_weight, self.perceptual_weight,
                  self.gan_weight, self.vq_beta):
            if w < 0:
                raise ValueError("loss weights must be non-negative")
        if min(self.epochs_stage1, self.epochs_stage2, self.epochs_stage3) < 1:
            raise ValueError("every stage needs at least one epoch")


@dataclass
class StageState:
    stage: str
    frozen: tuple = ()

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.stage == STAGE_FINETUNE and set(self.frozen) != {"encoder", "quantizer"}:
            raise ValueError("alternate_finetune freezes exactly encoder and quantizer")


def stage_plan(strategy: str, cfg: TokenizerTrainConfig) -> list[tuple[str, int]]:
    """Stage sequence for a strategy; all strategies share one epoch budget."""
    e1, e2, e3 = cfg.epochs_stage1, cfg.epochs_stage2, cfg.epochs_stage3
    if strategy == "three-stage":
        return [(STAGE_WARMUP, e1), (STAGE_DISCRETE, e2), (STAGE_FINETUNE, e3)]
    if strategy == "no-warmup":
        return [(STAGE_DISCRETE, e1 + e2), (STAGE_FINETUNE, e3)]
    if strategy == "joint-alternate":
        return [(STAGE_WARMUP, e1), (STAGE_JOINT, e2 + e3)]
    raise ConfigurationError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


class PatchDiscriminator(nn.Module):
    """Small patch CNN with a per-patch logit map."""

    def __init__(self, base_width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, base_width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(base_width, base_width * 2, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(base_width * 2, 1, 3, padding=1),
        )

    def forward(self, x):
        return self.net(x)


def hinge_d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    return F.relu(1.0 - real_logits).mean() + F.relu(1.0 + fake_logits).mean()


def hinge_g_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    return -fake_logits.mean()


def gan_loss(disc: nn.Module, real: torch.Tensor, fake: torch.Tensor):
    """(generator term, discriminator term) under the hinge formulation.
    The discriminator term detaches the fake batch; it belongs to a separate
    optimizer."""
    if real.shape != fake.shape:
        raise ValueError("real/fake shapes differ")
    g_term = hinge_g_loss(disc(fake))
    d_term = hinge_d_loss(disc(real), disc(fake.detach()))
    return g_term, d_term


def sample_path_flags(n: int, generator: torch.Generator) -> torch.Tensor:
    """Per-image coin flips for the alternate stages; True selects the
    discrete path (50% probability)."""
    return torch.rand(n, generator=generator) < 0.5


class TokenizerTrainer:
    """Owns the tokenizer, discriminator, perceptual extractor, optimizers,
    and the seeded generator all randomness flows through."""

    def __init__(self, model: HybridTokenizer, cfg: TokenizerTrainConfig, seed: int = 0,
                 perceptual: RandomFeatureExtractor | None = None):
        self.model = model
        self.cfg = cfg
        self.generator = torch.Generator().manual_seed(seed)
        self.perceptual = perceptual if perceptual is not None else RandomFeatureExtractor(seed=1234)
        self.disc = PatchDiscriminator()
        self.opt: torch.optim.Optimizer | None = None
        self.opt_disc = torch.optim.Adam(self.disc.parameters(), lr=cfg.learning_rate,
                                         betas=cfg.betas)
        self.completed_stages: list[str] = []
        self.history: list[dict] = []
        self._reservoir: list[torch.Tensor] = []

    # ---------------------------------------------------------------- stages

    def _check_order(self, stage: str) -> None:
        done = self.completed_stages
        if stage == STAGE_WARMUP and done:
            raise ConfigurationError("continuous warm-up must run first")
        if stage == STAGE_DISCRETE and any(s not in (STAGE_WARMUP,) for s in done):
            raise ConfigurationError("discrete learning must follow the warm-up (or start)")
        if stage == STAGE_FINETUNE and STAGE_DISCRETE not in done:
            raise ConfigurationError("alternate fine-tuning requires completed discrete learning")
        if stage == STAGE_JOINT and done != [STAGE_WARMUP]:
            raise ConfigurationError("joint alternate training runs directly after warm-up")

    def _configure_stage(self, stage: str) -> StageState:
        frozen: tuple = ()
        for p in self.model.parameters():
            p.requires_grad_(True)
        if stage == STAGE_FINETUNE:
            frozen = ("encoder", "quantizer")
            for p in self.model.encoder.parameters():
                p.requires_grad_(False)
            for p in self.model.quantizer.parameters():
                p.requires_grad_(False)
        trainable = [p for p in self.model.parameters() if p.requires_grad]
        self.opt = torch.optim.Adam(trainable, lr=self.cfg.learning_rate, betas=self.cfg.betas)
        return StageState(stage=stage, frozen=frozen)

    # ------------------------------------------------------------ train step

    def _path_flags(self, stage: str, n: int) -> torch.Tensor:
        if stage == STAGE_WARMUP:
            return torch.zeros(n, dtype=torch.bool)
        if stage == STAGE_DISCRETE:
            return torch.ones(n, dtype=torch.bool)
        return sample_path_flags(n, self.generator)

    def train_step(self, batch: torch.Tensor, state: StageState) -> dict:
        """One optimization step; returns raw per-term loss values.

        The reported total equals l2_weight*mse + l1_weight*l1 +
        perceptual_weight*perceptual + gan_weight*gan_generator + vq.
        """
        if state.stage == STAGE_FINETUNE:
            if any(p.requires_grad for p in self.model.encoder.parameters()):
                raise ConfigurationError("alternate fine-tuning step with unfrozen encoder")
            if any(p.requires_grad for p in self.model.quantizer.parameters()):
                raise ConfigurationError("alternate fine-tuning step with unfrozen quantizer")
        if self.opt is None:
            raise ConfigurationError("run_stage (or _configure_stage) must set up the optimizer")

        cfg = self.cfg
        flags = self._path_flags(state.stage, batch.shape[0])
        z = self.model.encoder(batch)

        report: dict = {"stage": state.stage}
        decoder_input = z
        vq_term = None
        if flags.any():
            z_discrete = z[flags]
            _, zq = self.model.quantizer.quantize(z_discrete, update_usage=True)
            vq_term = vq_loss(z_discrete, zq, cfg.vq_beta)
            self._reservoir_add(z_discrete.detach())
            ste = straight_through(z_discrete, zq)
            decoder_input = z.clone()
            decoder_input[flags] = ste
        recon = self.model.decoder(decoder_input)

        mse = F.mse_loss(recon, batch)
        l1 = F.l1_loss(recon, batch)
        perceptual = feature_distance(self.perceptual, recon, batch)
        if cfg.gan_weight > 0:
            g_term, d_term = gan_loss(self.disc, batch, recon)
        else:
            g_term = torch.zeros(())
            d_term = None

        total = (cfg.l2_weight * mse + cfg.l1_weight * l1
                 + cfg.perceptual_weight * perceptual + cfg.gan_weight * g_term)
        if vq_term is not None:
            total = total + vq_term
            report["vq"] = vq_term.item()

        self.opt.zero_grad()
        self.disc.zero_grad()
        total.backward()
        self.opt.step()

        if d_term is not None:
            self.opt_disc.zero_grad()
            d_term.backward()
            self.opt_disc.step()
            report["gan_discriminator"] = d_term.item()

        report.update(mse=mse.item(), l1=l1.item(), perceptual=perceptual.item(),
                      gan_generator=g_term.item(), total=total.item())
        return report

    # -------------------------------------------------------- dead codebook

    def _reservoir_add(self, vectors4d: torch.Tensor, cap: int = 2048) -> None:
        flat = vectors4d.permute(0, 2, 3, 1).reshape(-1, vectors4d.shape[1])
        keep = min(64, flat.shape[0])
        picks = torch.randint(0, flat.shape[0], (keep,), generator=self.generator)
        self._reservoir.append(flat[picks])
        while sum(r.shape[0] for r in self._reservoir) > cap:
            self._reservoir.pop(0)

    # ------------------------------------------------------------ validation

    @torch.no_grad()
    def validate(self, images: torch.Tensor, batch_size: int | None = None) -> dict:
        """Held-out per-pixel MSE of both reconstruction paths."""
        bs = batch_size or self.cfg.batch_size
        self.model.eval()
        sums = {"continuous": 0.0, "discrete": 0.0}
        for start in range(0, images.shape[0], bs):
            chunk = images[start:start + bs]
            for path in sums:
                recon = self.model.reconstruct(chunk, path, update_usage=False)
                sums[path] += F.mse_loss(recon, chunk, reduction="sum").item()
        self.model.train()
        n = images.numel()
        return {"val_mse_continuous": sums["continuous"] / n,
                "val_mse_discrete": sums["discrete"] / n}

    # ---------------------------------------------------------------- epochs

    def run_stage(self, train_images: torch.Tensor, val_images: torch.Tensor,
                  stage: str, epochs: int) -> list[dict]:
        """Train one stage for the given epoch count; appends one record per
        epoch to the history and returns those records."""
        self._check_order(stage)
        state = self._configure_stage(stage)
        self.model.train()
        records = []
        for epoch in range(epochs):
            self._reservoir.clear()
            if stage in (STAGE_DISCRETE, STAGE_JOINT):
                self.model.quantizer.reset_usage()
            order = torch.randperm(train_images.shape[0], generator=self.generator)
            term_sums: dict[str, float] = {}
            steps = 0
            for start in range(0, len(order), self.cfg.batch_size):
                batch = train_images[order[start:start + self.cfg.batch_size]]
                report = self.train_step(batch, state)
                for key, value in report.items():
                    if isinstance(value, float):
                        term_sums[key] = term_sums.get(key, 0.0) + value
                steps += 1
            record = {k: v / steps for k, v in term_sums.items()}
            record.update(stage=stage, epoch=epoch,
                          codebook_utilization=self.model.quantizer.usage_report().utilization)
            if stage in (STAGE_DISCRETE, STAGE_JOINT) and self._reservoir:
                reseeded = self.model.quantizer.reseed_dead_entries(
                    torch.cat(self._reservoir), self.generator)
                record["reseeded_entries"] = reseeded
            record.update(self.validate(val_images))
            records.append(record)
            self.history.append(record)
        self.completed_stages.append(stage)
        return records

    def run_strategy(self, train_images: torch.Tensor, val_images: torch.Tensor,
                     strategy: str = "three-stage") -> list[dict]:
        for stage, epochs in stage_plan(strategy, self.cfg):
            self.run_stage(train_images, val_images, stage, epochs)
        return self.history
