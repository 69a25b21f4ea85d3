import math

import pytest
import torch

from hybridgen.diffusion import DiffusionHead, DiffusionHeadConfig, NoiseSchedule, ResidualStats
from hybridgen.errors import ConfigurationError, StateError
from hybridgen.sampling import (SamplerConfig, cfg_combine, generate,
                                masked_after_step, sample_step, unmask_schedule)
from hybridgen.tokenizer import HybridTokenizer, TokenizerConfig
from hybridgen.transformer import GeneratorConfig, MaskState, MaskedTokenTransformer


def reference_masked_counts(n, steps):
    # independent evaluation of the floor-cosine law with the >=1 adjustment
    ms = [n]
    for k in range(1, steps + 1):
        target = math.floor(n * math.cos(math.pi * k / (2 * steps)))
        ms.append(max(0, min(target, ms[-1] - 1)))
    return ms


def test_unmask_schedule_frozen_values():
    assert unmask_schedule(16, 4) == [2, 3, 5, 6]
    assert unmask_schedule(64, 12) == [1, 2, 2, 4, 5, 5, 7, 6, 8, 8, 8, 8]
    assert unmask_schedule(64, 1) == [64]


@pytest.mark.parametrize("n,steps", [(16, 4), (64, 12), (256, 12)])
def test_unmask_schedule_law(n, steps):
    counts = unmask_schedule(n, steps)
    ms = reference_masked_counts(n, steps)
    assert sum(counts) == n
    assert ms[-1] == 0
    assert all(c >= 1 for c in counts)
    remaining = n
    for k, c in enumerate(counts, start=1):
        remaining -= c
        assert remaining == ms[k]
        assert remaining == masked_after_step(n, steps, k)


def test_unmask_schedule_rejects_bad_args():
    with pytest.raises(ValueError):
        unmask_schedule(8, 9)
    with pytest.raises(ValueError):
        unmask_schedule(8, 0)


def test_cfg_combine():
    cond = torch.ones(2, 3)
    uncond = torch.zeros(2, 3)
    assert torch.equal(cfg_combine(cond, uncond, 1.0), cond)
    assert torch.equal(cfg_combine(cond, uncond, 4.5), torch.full((2, 3), 4.5))
    assert torch.equal(cfg_combine(cond, uncond, 0.0), uncond)
    with pytest.raises(ValueError):
        cfg_combine(torch.zeros(2, 3), torch.zeros(3, 2), 1.0)


class StubModel:
    """Returns fixed per-position logits regardless of the mask state."""

    def __init__(self, logits, width=8):
        self.logits = logits  # (n, vocab)
        self.width = width
        self.condition_dim = 4

    def null_for(self, batch, length=1):
        return torch.zeros(batch, length, self.condition_dim)

    def __call__(self, state, cond):
        b = state.committed.shape[0]
        n = self.logits.shape[0]
        logits = self.logits.unsqueeze(0).expand(b, -1, -1)
        hidden = torch.zeros(b, n, self.width)
        return logits, hidden


def test_sample_step_zero_temperature_commits_top_logprob():
    # peaked distributions: sampling is effectively deterministic, so the
    # committed set must equal the brute-force top-confidence selection
    n, vocab = 9, 6
    gen = torch.Generator().manual_seed(0)
    peaks = torch.randint(0, vocab, (n,), generator=gen)
    peak_sizes = 20.0 + 10.0 * torch.rand(n, generator=gen)  # distinct confidences
    logits = torch.zeros(n, vocab)
    logits[torch.arange(n), peaks] = peak_sizes
    model = StubModel(logits)

    cfg = SamplerConfig(steps=3, temperature=0.0, cfg_scale=1.0)
    state = MaskState.fully_masked(1, (3, 3))
    cond = torch.zeros(1, 1, 4)
    new_state = sample_step(state, model, cond, cfg, 1, torch.Generator().manual_seed(1))

    commit = unmask_schedule(n, 3)[0]
    logprobs = torch.log_softmax(logits, dim=-1)[torch.arange(n), peaks]
    expected = set(logprobs.topk(commit).indices.tolist())
    got = set((~new_state.mask).reshape(-1).nonzero().flatten().tolist())
    assert got == expected
    assert (new_state.committed.reshape(-1)[list(got)] == peaks[list(got)]).all()


def test_sample_step_preserves_committed_tokens():
    n, vocab = 16, 8
    gen = torch.Generator().manual_seed(2)
    logits = torch.randn(n, vocab, generator=gen)
    model = StubModel(logits)
    cfg = SamplerConfig(steps=4, temperature=4.5, cfg_scale=2.0)
    cond = torch.zeros(2, 1, 4)
    state = MaskState.fully_masked(2, (4, 4))
    sampler_gen = torch.Generator().manual_seed(3)

    committed_sets = [(~state.mask).clone()]
    snapshots = [state.committed.clone()]
    for k in range(1, 5):
        state = sample_step(state, model, cond, cfg, k, sampler_gen)
        # monotone commitment: previously unmasked stay unmasked
        assert (committed_sets[-1] <= ~state.mask).all()
        prev_unmasked = committed_sets[-1]
        assert torch.equal(state.committed[prev_unmasked], snapshots[-1][prev_unmasked])
        committed_sets.append((~state.mask).clone())
        snapshots.append(state.committed.clone())
        assert (state.masked_counts() == masked_after_step(n, 4, k)).all()
    assert not state.mask.any()


def test_sample_step_rejects_inconsistent_state():
    model = StubModel(torch.zeros(4, 4))
    cfg = SamplerConfig(steps=2, temperature=0.0)
    state = MaskState.fully_masked(1, (2, 2))
    state.mask[0, 0, 0] = False  # one token already committed: not step-1 state
    with pytest.raises(StateError):
        sample_step(state, model, torch.zeros(1, 1, 4), cfg, 1,
                    torch.Generator().manual_seed(0))


@pytest.fixture(scope="module")
def pipeline():
    torch.manual_seed(0)
    tok_cfg = TokenizerConfig(compression_factor=8, latent_channels=4, base_width=8,
                              stage_depths=[1, 1, 1], codebook_size=16)
    tokenizer = HybridTokenizer(tok_cfg)
    gen_cfg = GeneratorConfig(layers=1, width=32, heads=2, vocab=16, condition_dim=8,
                              max_grid=4, attention_dropout=0.0)
    model = MaskedTokenTransformer(gen_cfg)
    head_cfg = DiffusionHeadConfig(mlp_layers=2, hidden_width=16, target_dim=4)
    head = DiffusionHead(head_cfg, condition_width=32)
    schedule = NoiseSchedule(1000)
    stats = ResidualStats(mean=torch.zeros(4), std=torch.ones(4))
    return model, head, tokenizer, schedule, stats


def test_generate_deterministic(pipeline):
    model, head, tokenizer, schedule, stats = pipeline
    cond = torch.randn(2, 1, 8)
    cfg = SamplerConfig(steps=4, diffusion_steps=3, seed=42)
    a = generate(model, head, tokenizer, schedule, stats, cond, (4, 4), cfg)
    b = generate(model, head, tokenizer, schedule, stats, cond, (4, 4), cfg)
    assert torch.equal(a, b)
    assert a.shape == (2, 3, 32, 32)
    c = generate(model, head, tokenizer, schedule, stats, cond,
                 (4, 4), SamplerConfig(steps=4, diffusion_steps=3, seed=43))
    assert not torch.equal(a, c)


def test_generate_discrete_only_reduction(pipeline):
    model, head, tokenizer, schedule, stats = pipeline
    cond = torch.randn(1, 1, 8)
    cfg = SamplerConfig(steps=4, diffusion_steps=3, seed=7, discrete_only=True)
    images, tokens = generate(model, head, tokenizer, schedule, stats, cond,
                              (4, 4), cfg, return_tokens=True)
    tokenizer.eval()
    expected = tokenizer.decode(tokenizer.quantizer.lookup(tokens))
    assert torch.equal(images, expected)


def test_generate_same_tokens_hybrid_and_discrete(pipeline):
    model, head, tokenizer, schedule, stats = pipeline
    cond = torch.randn(1, 1, 8)
    base = dict(steps=4, diffusion_steps=3, seed=7)
    _, t_hybrid = generate(model, head, tokenizer, schedule, stats, cond, (4, 4),
                           SamplerConfig(**base), return_tokens=True)
    _, t_discrete = generate(model, head, tokenizer, schedule, stats, cond, (4, 4),
                             SamplerConfig(**base, discrete_only=True), return_tokens=True)
    assert torch.equal(t_hybrid, t_discrete)


def test_generate_checks_compatibility(pipeline):
    model, head, tokenizer, schedule, stats = pipeline
    bad_cfg = GeneratorConfig(layers=1, width=32, heads=2, vocab=99, condition_dim=8,
                              max_grid=4)
    torch.manual_seed(0)
    bad_model = MaskedTokenTransformer(bad_cfg)
    with pytest.raises(ConfigurationError):
        generate(bad_model, head, tokenizer, schedule, stats, torch.randn(1, 1, 8),
                 (4, 4), SamplerConfig(steps=2))


def test_generate_requires_stats_for_hybrid(pipeline):
    model, head, tokenizer, schedule, _ = pipeline
    with pytest.raises(ConfigurationError):
        generate(model, head, tokenizer, schedule, None, torch.randn(1, 1, 8),
                 (4, 4), SamplerConfig(steps=2))


def test_generate_rejects_too_many_steps(pipeline):
    model, head, tokenizer, schedule, stats = pipeline
    with pytest.raises(ValueError):
        generate(model, head, tokenizer, schedule, stats, torch.randn(1, 1, 8),
                 (4, 4), SamplerConfig(steps=17))


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(steps=0)
    with pytest.raises(ValueError):
        SamplerConfig(cfg_scale=-1)
    with pytest.raises(ValueError):
        SamplerConfig(cfg_schedule="linear")
