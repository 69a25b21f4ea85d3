import pytest
import torch

from hybridgen.errors import ConfigurationError
from hybridgen.tokenizer import HybridTokenizer, TokenizerConfig
from hybridgen.tokenizer_training import (STAGE_DISCRETE, STAGE_FINETUNE,
                                          STAGE_JOINT, STAGE_WARMUP, StageState,
                                          TokenizerTrainConfig, TokenizerTrainer,
                                          gan_loss, hinge_d_loss, hinge_g_loss,
                                          sample_path_flags, stage_plan,
                                          PatchDiscriminator)


def make_trainer(seed=0, **cfg_overrides):
    torch.manual_seed(seed)
    model = HybridTokenizer(TokenizerConfig(compression_factor=8, latent_channels=4,
                                            base_width=8, stage_depths=[1, 1, 1],
                                            codebook_size=16))
    cfg = TokenizerTrainConfig(batch_size=4, epochs_stage1=1, epochs_stage2=1,
                               epochs_stage3=1, **cfg_overrides)
    return TokenizerTrainer(model, cfg, seed=seed)


def tiny_images(n=8, seed=0, size=32):
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(n, 3, size, size, generator=gen) * 2 - 1


def test_stage_plan_budgets_match():
    cfg = TokenizerTrainConfig(epochs_stage1=2, epochs_stage2=8, epochs_stage3=2)
    plans = {name: stage_plan(name, cfg)
             for name in ("three-stage", "no-warmup", "joint-alternate")}
    assert plans["three-stage"] == [(STAGE_WARMUP, 2), (STAGE_DISCRETE, 8), (STAGE_FINETUNE, 2)]
    assert plans["no-warmup"] == [(STAGE_DISCRETE, 10), (STAGE_FINETUNE, 2)]
    assert plans["joint-alternate"] == [(STAGE_WARMUP, 2), (STAGE_JOINT, 10)]
    budgets = {name: sum(e for _, e in plan) for name, plan in plans.items()}
    assert len(set(budgets.values())) == 1


def test_stage_state_validates_frozen_set():
    StageState(STAGE_FINETUNE, frozen=("encoder", "quantizer"))
    with pytest.raises(ValueError):
        StageState(STAGE_FINETUNE, frozen=("encoder",))
    with pytest.raises(ValueError):
        StageState("stage4")


def test_hinge_hand_values():
    logits = torch.tensor([-2.0, 0.0, 2.0])
    # max(0, 1-x): 3 + 1 + 0 = 4;  max(0, 1+x): 0 + 1 + 3 = 4
    assert hinge_d_loss(logits, logits).item() == pytest.approx(8.0 / 3.0)
    assert hinge_g_loss(logits).item() == pytest.approx(0.0)


def test_gan_loss_identical_inputs_finite():
    torch.manual_seed(0)
    disc = PatchDiscriminator(base_width=8)
    imgs = tiny_images(2)
    g, d = gan_loss(disc, imgs, imgs.clone())
    assert torch.isfinite(g) and torch.isfinite(d)


def test_path_flags_fraction():
    gen = torch.Generator().manual_seed(123)
    flags = sample_path_flags(10_000, gen)
    frac = flags.float().mean().item()
    assert 0.48 <= frac <= 0.52


def test_warmup_step_skips_vq_and_usage():
    trainer = make_trainer()
    state = trainer._configure_stage(STAGE_WARMUP)
    report = trainer.train_step(tiny_images(4), state)
    assert "vq" not in report
    assert trainer.model.quantizer.usage_report().total == 0


def test_discrete_step_updates_usage_and_reports_vq():
    trainer = make_trainer()
    state = trainer._configure_stage(STAGE_DISCRETE)
    report = trainer.train_step(tiny_images(4), state)
    assert "vq" in report
    assert trainer.model.quantizer.usage_report().total == 4 * 16  # 4 imgs x 4x4 grid


def test_loss_decomposition():
    trainer = make_trainer(l1_weight=0.3)
    state = trainer._configure_stage(STAGE_DISCRETE)
    r = trainer.train_step(tiny_images(4), state)
    cfg = trainer.cfg
    expected = (cfg.l2_weight * r["mse"] + cfg.l1_weight * r["l1"]
                + cfg.perceptual_weight * r["perceptual"]
                + cfg.gan_weight * r["gan_generator"] + r.get("vq", 0.0))
    assert r["total"] == pytest.approx(expected, abs=1e-6)


def test_gan_weight_zero_never_evaluates_discriminator():
    trainer = make_trainer(gan_weight=0.0)

    def boom(*args, **kwargs):
        raise AssertionError("discriminator evaluated despite zero weight")

    trainer.disc.forward = boom
    state = trainer._configure_stage(STAGE_WARMUP)
    report = trainer.train_step(tiny_images(4), state)
    assert report["gan_generator"] == 0.0
    assert "gan_discriminator" not in report


def test_finetune_freezes_encoder_and_codebook():
    trainer = make_trainer()
    imgs = tiny_images(8)
    trainer.run_stage(imgs, imgs[:4], STAGE_WARMUP, 1)
    trainer.run_stage(imgs, imgs[:4], STAGE_DISCRETE, 1)

    state = trainer._configure_stage(STAGE_FINETUNE)
    enc_before = {k: v.clone() for k, v in trainer.model.encoder.state_dict().items()}
    emb_before = trainer.model.quantizer.embedding.detach().clone()
    dec_before = {k: v.clone() for k, v in trainer.model.decoder.state_dict().items()}
    for _ in range(3):
        trainer.train_step(imgs[:4], state)
    for k, v in trainer.model.encoder.state_dict().items():
        assert torch.equal(v, enc_before[k])
    assert torch.equal(trainer.model.quantizer.embedding.detach(), emb_before)
    assert any(not torch.equal(v, dec_before[k])
               for k, v in trainer.model.decoder.state_dict().items())


def test_finetune_step_with_unfrozen_encoder_rejected():
    trainer = make_trainer()
    imgs = tiny_images(8)
    trainer.run_stage(imgs, imgs[:4], STAGE_WARMUP, 1)
    trainer.run_stage(imgs, imgs[:4], STAGE_DISCRETE, 1)
    trainer._configure_stage(STAGE_FINETUNE)
    for p in trainer.model.encoder.parameters():
        p.requires_grad_(True)
    with pytest.raises(ConfigurationError):
        trainer.train_step(imgs[:4], StageState(STAGE_FINETUNE, ("encoder", "quantizer")))


def test_stage_order_enforced():
    trainer = make_trainer()
    imgs = tiny_images(8)
    with pytest.raises(ConfigurationError):
        trainer.run_stage(imgs, imgs[:4], STAGE_FINETUNE, 1)
    trainer.run_stage(imgs, imgs[:4], STAGE_DISCRETE, 1)  # no-warmup path is legal
    with pytest.raises(ConfigurationError):
        trainer.run_stage(imgs, imgs[:4], STAGE_WARMUP, 1)
    with pytest.raises(ConfigurationError):
        trainer.run_stage(imgs, imgs[:4], STAGE_JOINT, 1)
    trainer.run_stage(imgs, imgs[:4], STAGE_FINETUNE, 1)


def test_run_stage_records_schema():
    trainer = make_trainer()
    imgs = tiny_images(8)
    records = trainer.run_stage(imgs, imgs[:4], STAGE_WARMUP, 2)
    assert len(records) == 2
    for rec in records:
        assert rec["stage"] == STAGE_WARMUP
        assert {"mse", "l1", "perceptual", "gan_generator", "total",
                "val_mse_continuous", "val_mse_discrete",
                "codebook_utilization"} <= set(rec)
        assert "vq" not in rec


def test_run_strategy_executes_plan():
    trainer = make_trainer()
    imgs = tiny_images(8)
    history = trainer.run_strategy(imgs, imgs[:4], "three-stage")
    stages = [rec["stage"] for rec in history]
    assert stages == [STAGE_WARMUP, STAGE_DISCRETE, STAGE_FINETUNE]
    assert trainer.completed_stages == [STAGE_WARMUP, STAGE_DISCRETE, STAGE_FINETUNE]


def test_training_is_seed_reproducible():
    def run():
        trainer = make_trainer(seed=11)
        imgs = tiny_images(8, seed=2)
        trainer.run_strategy(imgs, imgs[:4], "three-stage")
        return trainer.history[-1]["val_mse_discrete"]

    assert run() == run()


def test_config_rejects_negative_weights():
    with pytest.raises(ValueError):
        TokenizerTrainConfig(gan_weight=-0.1)
    with pytest.raises(ValueError):
        TokenizerTrainConfig(epochs_stage2=0)
