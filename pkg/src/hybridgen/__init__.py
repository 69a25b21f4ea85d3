"""Hybrid image tokenizer (discrete + residual paths) with a masked
autoregressive generator and a per-token residual diffusion head."""

from .diffusion import (DiffusionHead, DiffusionHeadConfig, NoiseSchedule,
                        ResidualStats, add_noise, denoise, diffusion_loss)
from .errors import ConfigurationError, StateError
from .grids import decompose, grid_shape, recombine
from .quantizer import VectorQuantizer, straight_through, vq_loss
from .sampling import SamplerConfig, cfg_combine, generate, unmask_schedule
from .tokenizer import HybridTokenizer, TokenizerConfig
from .tokenizer_training import TokenizerTrainConfig, TokenizerTrainer
from .transformer import (GeneratorConfig, MaskState, MaskedTokenTransformer,
                          masked_ce_loss, sample_train_mask)

__all__ = [
    "ConfigurationError", "StateError",
    "decompose", "recombine", "grid_shape",
    "VectorQuantizer", "vq_loss", "straight_through",
    "HybridTokenizer", "TokenizerConfig",
    "TokenizerTrainer", "TokenizerTrainConfig",
    "MaskedTokenTransformer", "GeneratorConfig", "MaskState",
    "sample_train_mask", "masked_ce_loss",
    "DiffusionHead", "DiffusionHeadConfig", "NoiseSchedule", "ResidualStats",
    "add_noise", "diffusion_loss", "denoise",
    "SamplerConfig", "unmask_schedule", "cfg_combine", "generate",
]

__version__ = "0.1.0"
