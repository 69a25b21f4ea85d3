import pytest

from hybridgen.config import (ExperimentConfig, experiment_from_dict,
                              load_experiment_config, save_experiment_config)
from hybridgen.errors import ConfigurationError


def test_defaults_are_consistent():
    cfg = ExperimentConfig()
    assert cfg.generator.vocab == cfg.tokenizer.codebook_size
    assert cfg.head.target_dim == cfg.tokenizer.latent_channels
    # sampling defaults: 12 unmask steps, temperature 4.5, CFG 4.5, 20 diffusion steps
    assert cfg.sampler.steps == 12
    assert cfg.sampler.temperature == 4.5
    assert cfg.sampler.cfg_scale == 4.5
    assert cfg.sampler.diffusion_steps == 20
    # tokenizer stage budget keeps the 1:4:1 ratio
    t = cfg.tokenizer_train
    assert t.epochs_stage2 == 4 * t.epochs_stage1 == 4 * t.epochs_stage3
    # generator budget keeps the 4:1 pretrain:finetune ratio
    g = cfg.generator_train
    assert g.steps_pretrain == 4 * g.steps_finetune


def test_yaml_roundtrip(tmp_path):
    cfg = ExperimentConfig(seed=7)
    path = tmp_path / "exp.yaml"
    save_experiment_config(path, cfg)
    back = load_experiment_config(path)
    assert back == cfg
    assert back.hash() == cfg.hash()


def test_unknown_section_rejected():
    with pytest.raises(ConfigurationError):
        experiment_from_dict({"optimizer": {"lr": 1}})


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError):
        experiment_from_dict({"sampler": {"stepz": 12}})


def test_component_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        experiment_from_dict({"generator": {"vocab": 999}})


def test_finetune_resolution_must_double():
    with pytest.raises(ConfigurationError):
        experiment_from_dict({"data": {"resolution": 32, "finetune_resolution": 48}})


def test_partial_override():
    cfg = experiment_from_dict({"seed": 3, "sampler": {"steps": 8}})
    assert cfg.seed == 3
    assert cfg.sampler.steps == 8
    assert cfg.sampler.temperature == 4.5  # untouched default


def test_malformed_yaml_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("seed: [unclosed")
    with pytest.raises(ConfigurationError):
        load_experiment_config(path)
    path.write_text("- just\n- a\n- list\n")
    with pytest.raises(ConfigurationError):
        load_experiment_config(path)
