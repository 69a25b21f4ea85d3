"""Tagged binary checkpoint container.

Layout (all little-endian):

    magic "HGCK" | version u32 | kind str | config json str |
    n_arrays u32 | { name str, dtype str, ndim u32, dims u64..., nbytes u64, raw } |
    extra json str

Strings are u32-length-prefixed UTF-8.  Arrays are written sorted by name and
JSON is canonical (sorted keys, compact separators), so loading a checkpoint
and saving it again reproduces the bytes exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .conditioning import ClassConditioner
from .diffusion import DiffusionHead, DiffusionHeadConfig, ResidualStats
from .errors import ConfigurationError
from .tokenizer import HybridTokenizer, TokenizerConfig
from .transformer import GeneratorConfig, MaskedTokenTransformer

MAGIC = b"HGCK"
VERSION = 1
KINDS = ("tokenizer", "generator", "head")


@dataclass
class Checkpoint:
    kind: str
    config: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _unpack_str(data: bytes, offset: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("<I", data, offset)
    offset += 4
    return data[offset:offset + length].decode("utf-8"), offset + length


def serialize(ckpt: Checkpoint) -> bytes:
    if ckpt.kind not in KINDS:
        raise ConfigurationError(f"unknown checkpoint kind {ckpt.kind!r}")
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(ckpt.kind),
             _pack_str(canonical_json(ckpt.config)),
             struct.pack("<I", len(ckpt.arrays))]
    for name in sorted(ckpt.arrays):
        arr = np.ascontiguousarray(ckpt.arrays[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        parts.append(_pack_str(name))
        parts.append(_pack_str(arr.dtype.str))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        raw = arr.tobytes()
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
    parts.append(_pack_str(canonical_json(ckpt.extra)))
    return b"".join(parts)


def deserialize(data: bytes) -> Checkpoint:
    if data[:4] != MAGIC:
        raise ConfigurationError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    offset = 8
    kind, offset = _unpack_str(data, offset)
    config_str, offset = _unpack_str(data, offset)
    (n_arrays,) = struct.unpack_from("<I", data, offset)
    offset += 4
    arrays = {}
    for _ in range(n_arrays):
        name, offset = _unpack_str(data, offset)
        dtype_str, offset = _unpack_str(data, offset)
        (ndim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, offset) if ndim else ()
        offset += 8 * ndim
        (nbytes,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        arr = np.frombuffer(data, dtype=np.dtype(dtype_str), count=int(np.prod(shape, dtype=np.int64)) if shape else 1, offset=offset)
        arrays[name] = arr.reshape(shape).copy() if shape else arr[:1].reshape(()).copy()
        offset += nbytes
    extra_str, offset = _unpack_str(data, offset)
    return Checkpoint(kind=kind, config=json.loads(config_str), arrays=arrays,
                      extra=json.loads(extra_str))


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(serialize(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return deserialize(Path(path).read_bytes())


# --------------------------------------------------------------- model glue

def dataclass_from_dict(cls, data: dict):
    """Strict construction: unknown or missing keys are configuration errors."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    missing = names - set(data)
    if unknown or missing:
        raise ConfigurationError(
            f"{cls.__name__} snapshot mismatch: unknown={sorted(unknown)}"
            f" missing={sorted(missing)}"
        )
    return cls(**data)


def _module_arrays(module: torch.nn.Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {prefix + k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def _load_module(module: torch.nn.Module, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
    state = {k[len(prefix):]: torch.from_numpy(v.copy())
             for k, v in arrays.items() if k.startswith(prefix)}
    module.load_state_dict(state, strict=True)


def _rng_extra(generator: torch.Generator | None) -> dict:
    if generator is None:
        return {}
    return {"rng_state": generator.get_state().numpy().tobytes().hex()}


def restore_rng(extra: dict) -> torch.Generator | None:
    blob = extra.get("rng_state")
    if blob is None:
        return None
    gen = torch.Generator()
    state = torch.from_numpy(np.frombuffer(bytes.fromhex(blob), dtype=np.uint8).copy())
    gen.set_state(state)
    return gen


def save_tokenizer_checkpoint(path, model: HybridTokenizer,
                              completed_stages: list[str] | None = None,
                              generator: torch.Generator | None = None) -> None:
    extra = {"completed_stages": completed_stages or []}
    extra.update(_rng_extra(generator))
    ckpt = Checkpoint(kind="tokenizer", config=dataclasses.asdict(model.config),
                      arrays=_module_arrays(model), extra=extra)
    save_checkpoint(path, ckpt)


def load_tokenizer_checkpoint(path) -> tuple[HybridTokenizer, dict]:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "tokenizer":
        raise ConfigurationError(f"expected a tokenizer checkpoint, got {ckpt.kind!r}")
    config = dataclass_from_dict(TokenizerConfig, ckpt.config)
    model = HybridTokenizer(config)
    _load_module(model, ckpt.arrays)
    return model, ckpt.extra


def save_generator_checkpoint(path, model: MaskedTokenTransformer,
                              conditioner: ClassConditioner, stats: ResidualStats,
                              generator: torch.Generator | None = None) -> None:
    config = {"generator": dataclasses.asdict(model.config),
              "num_classes": conditioner.num_classes}
    extra = {"residual_stats": {"mean": stats.mean.tolist(), "std": stats.std.tolist()}}
    extra.update(_rng_extra(generator))
    arrays = _module_arrays(model, "model.")
    arrays.update(_module_arrays(conditioner, "conditioner."))
    save_checkpoint(path, Checkpoint(kind="generator", config=config,
                                     arrays=arrays, extra=extra))


def load_generator_checkpoint(path) -> tuple[MaskedTokenTransformer, ClassConditioner,
                                             ResidualStats, dict]:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "generator":
        raise ConfigurationError(f"expected a generator checkpoint, got {ckpt.kind!r}")
    config = dataclass_from_dict(GeneratorConfig, ckpt.config["generator"])
    model = MaskedTokenTransformer(config)
    _load_module(model, ckpt.arrays, "model.")
    conditioner = ClassConditioner(ckpt.config["num_classes"], config.condition_dim)
    _load_module(conditioner, ckpt.arrays, "conditioner.")
    raw = ckpt.extra["residual_stats"]
    stats = ResidualStats(mean=torch.tensor(raw["mean"], dtype=torch.float32),
                          std=torch.tensor(raw["std"], dtype=torch.float32))
    return model, conditioner, stats, ckpt.extra


def save_head_checkpoint(path, head: DiffusionHead, condition_width: int) -> None:
    config = {"head": dataclasses.asdict(head.config), "condition_width": condition_width}
    save_checkpoint(path, Checkpoint(kind="head", config=config,
                                     arrays=_module_arrays(head)))


def load_head_checkpoint(path) -> DiffusionHead:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "head":
        raise ConfigurationError(f"expected a head checkpoint, got {ckpt.kind!r}")
    config = dataclass_from_dict(DiffusionHeadConfig, ckpt.config["head"])
    head = DiffusionHead(config, condition_width=ckpt.config["condition_width"])
    _load_module(head, ckpt.arrays)
    return head
