"""Command-line interface: training orchestration, sampling, evaluation,
profiling, and the ablation experiments.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import torch
from PIL import Image

from . import checkpoint as ckpt
from .config import ExperimentConfig, load_experiment_config
from .data import (DatasetSpec, class_names, compute_residual_stats,
                   generate_shapes_corpus, load_split)
from .diffusion import DiffusionHead, NoiseSchedule
from .errors import ConfigurationError
from .features import RandomFeatureExtractor
from .generator_training import GeneratorTrainer, transfer_lowres_weights
from .conditioning import ClassConditioner
from .metrics import MetricReport, fid_proxy, psnr, ssim
from .profiling import profile as run_profile
from .sampling import SamplerConfig, generate
from .tokenizer import HybridTokenizer
from .tokenizer_training import (STAGE_DISCRETE, STAGE_FINETUNE, STAGE_WARMUP,
                                 STRATEGIES, TokenizerTrainer, stage_plan)
from .transformer import MaskedTokenTransformer

STAGE_NUMBERS = {1: STAGE_WARMUP, 2: STAGE_DISCRETE, 3: STAGE_FINETUNE}


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except click.ClickException:
            raise
        except Exception as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


@click.group()
def main():
    """Hybrid tokenizer + masked autoregressive generator toolkit."""


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _resolve_config(config_path, seed_override) -> ExperimentConfig:
    config = load_experiment_config(config_path)
    if seed_override is not None:
        config = dataclasses.replace(config, seed=seed_override)
    return config


def _datasets(config: ExperimentConfig, data_root, resolution=None):
    root = data_root or config.data.root
    if root is None:
        raise ConfigurationError("no dataset root given (flag --data or config data.root)")
    res = resolution or config.data.resolution
    train = load_split(DatasetSpec(root=root, resolution=res, split="train"))
    val = load_split(DatasetSpec(root=root, resolution=res, split="val"))
    return train, val


def _table(rows: list[dict], columns: list[str]) -> str:
    widths = {c: max(len(c), *(len(f"{r.get(c, '')}") for r in rows)) for c in columns}
    header = "  ".join(c.ljust(widths[c]) for c in columns)
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append("  ".join(f"{r.get(c, '')}".ljust(widths[c]) for c in columns))
    return "\n".join(lines)


def _fmt(x, digits=5):
    return f"{x:.{digits}g}" if isinstance(x, float) else x


# ------------------------------------------------------------------ datasets

@main.command("make-dataset")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--resolution", default=64, show_default=True)
@click.option("--per-class-train", default=64, show_default=True)
@click.option("--per-class-val", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@cli_errors
def cmd_make_dataset(out, resolution, per_class_train, per_class_val, seed):
    """Generate the procedural shapes-and-colors corpus."""
    generate_shapes_corpus(out, resolution=resolution, per_class_train=per_class_train,
                           per_class_val=per_class_val, seed=seed)
    click.echo(f"wrote {len(class_names())} classes under {out}")


# ----------------------------------------------------------------- tokenizer

@main.command("train-tokenizer")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--stage", default="all", show_default=True,
              help="all, or a single stage number 1/2/3 (three-stage strategy only)")
@click.option("--strategy", default="three-stage", show_default=True,
              type=click.Choice(STRATEGIES))
@click.option("--resume", type=click.Path(exists=True),
              help="checkpoint of the previous stage (required for --stage 2/3)")
@click.option("--seed", type=int, default=None)
@cli_errors
def cmd_train_tokenizer(config_path, data_root, out, stage, strategy, resume, seed):
    """Train the hybrid tokenizer with the staged adaptation schedule."""
    config = _resolve_config(config_path, seed)
    out.mkdir(parents=True, exist_ok=True)
    (train_images, _), (val_images, _) = _datasets(config, data_root)

    torch.manual_seed(config.seed)
    if stage == "all":
        model = HybridTokenizer(config.tokenizer)
        trainer = TokenizerTrainer(model, config.tokenizer_train, seed=config.seed)
        plan = stage_plan(strategy, config.tokenizer_train)
        for i, (stage_name, epochs) in enumerate(plan, start=1):
            records = trainer.run_stage(train_images, val_images, stage_name, epochs)
            _write_jsonl(out / "metrics.jsonl", records)
            ckpt.save_tokenizer_checkpoint(out / f"tokenizer_stage{i}.ckpt", model,
                                           trainer.completed_stages, trainer.generator)
        ckpt.save_tokenizer_checkpoint(out / "tokenizer.ckpt", model,
                                       trainer.completed_stages, trainer.generator)
        final = trainer.history[-1]
        click.echo(f"strategy={strategy} final val MSE: "
                   f"continuous={final['val_mse_continuous']:.5f} "
                   f"discrete={final['val_mse_discrete']:.5f}")
        return

    try:
        number = int(stage)
        stage_name = STAGE_NUMBERS[number]
    except (ValueError, KeyError):
        raise ConfigurationError(f"--stage must be all, 1, 2, or 3 (got {stage!r})")
    if strategy != "three-stage":
        raise ConfigurationError("single-stage runs are defined for the three-stage strategy")

    if number == 1:
        model = HybridTokenizer(config.tokenizer)
        trainer = TokenizerTrainer(model, config.tokenizer_train, seed=config.seed)
    else:
        if resume is None:
            raise ConfigurationError(f"--stage {number} requires --resume with the"
                                     f" stage-{number - 1} checkpoint")
        model, extra = ckpt.load_tokenizer_checkpoint(resume)
        needed = [STAGE_NUMBERS[k] for k in range(1, number)]
        if extra.get("completed_stages") != needed:
            raise ConfigurationError(
                f"checkpoint stages {extra.get('completed_stages')} do not match the"
                f" required prefix {needed}"
            )
        trainer = TokenizerTrainer(model, config.tokenizer_train, seed=config.seed)
        trainer.completed_stages = list(extra["completed_stages"])
        restored = ckpt.restore_rng(extra)
        if restored is not None:
            trainer.generator = restored
    epochs = {1: config.tokenizer_train.epochs_stage1,
              2: config.tokenizer_train.epochs_stage2,
              3: config.tokenizer_train.epochs_stage3}[number]
    records = trainer.run_stage(train_images, val_images, stage_name, epochs)
    _write_jsonl(out / "metrics.jsonl", records)
    ckpt.save_tokenizer_checkpoint(out / f"tokenizer_stage{number}.ckpt", model,
                                   trainer.completed_stages, trainer.generator)
    click.echo(f"stage {number} done: val discrete MSE"
               f" {records[-1]['val_mse_discrete']:.5f}")


# ----------------------------------------------------------------- generator

@main.command("train-generator")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", type=click.Path(exists=True))
@click.option("--tokenizer", "tokenizer_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--init", default="scratch", show_default=True,
              type=click.Choice(["scratch", "from_lowres"]))
@click.option("--lowres", type=click.Path(exists=True),
              help="low-resolution generator checkpoint (from_lowres)")
@click.option("--lowres-head", type=click.Path(exists=True),
              help="low-resolution diffusion-head checkpoint (from_lowres)")
@click.option("--resolution", type=int, default=None,
              help="training resolution (defaults to config data.resolution)")
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@cli_errors
def cmd_train_generator(config_path, data_root, tokenizer_path, out, init, lowres,
                        lowres_head, resolution, steps, seed):
    """Train the masked transformer and diffusion head on a frozen tokenizer."""
    config = _resolve_config(config_path, seed)
    out.mkdir(parents=True, exist_ok=True)
    tokenizer, _ = ckpt.load_tokenizer_checkpoint(tokenizer_path)
    if config.generator.vocab != tokenizer.config.codebook_size:
        raise ConfigurationError(
            f"generator.vocab {config.generator.vocab} does not match the tokenizer"
            f" codebook size {tokenizer.config.codebook_size}"
        )

    res = resolution or config.data.resolution
    (train_images, train_labels), _ = _datasets(config, data_root, resolution=res)
    grid = res // tokenizer.config.compression_factor

    torch.manual_seed(config.seed)
    stats = compute_residual_stats(train_images, tokenizer, seed=config.seed)

    gen_cfg = dataclasses.replace(config.generator, max_grid=grid)
    model = MaskedTokenTransformer(gen_cfg)
    head_width = config.generator.width
    head = DiffusionHead(config.head, condition_width=head_width)
    conditioner = ClassConditioner(config.data.num_classes, gen_cfg.condition_dim)

    if init == "from_lowres":
        if lowres is None or lowres_head is None:
            raise ConfigurationError("from_lowres requires --lowres and --lowres-head")
        low_model, low_conditioner, low_stats, _ = ckpt.load_generator_checkpoint(lowres)
        transfer_lowres_weights(model, low_model)
        conditioner.load_state_dict(low_conditioner.state_dict())
        head = ckpt.load_head_checkpoint(lowres_head)
        stats = low_stats  # shared latent space: stats carry over

    schedule = NoiseSchedule(config.head.train_timesteps)
    trainer = GeneratorTrainer(model, head, conditioner, tokenizer, stats, schedule,
                               config.generator_train, seed=config.seed)
    n_steps = steps if steps is not None else (
        config.generator_train.steps_finetune if init == "from_lowres"
        else config.generator_train.steps_pretrain)
    records = trainer.train(train_images, train_labels, n_steps,
                            log_prefix={"init": init, "resolution": res})
    _write_jsonl(out / "metrics.jsonl", records)
    ckpt.save_generator_checkpoint(out / "generator.ckpt", model, conditioner, stats,
                                   trainer.generator)
    ckpt.save_head_checkpoint(out / "head.ckpt", head, condition_width=head_width)
    click.echo(f"trained {n_steps} steps ({init}); final loss"
               f" {records[-1]['total']:.4f}")


# ------------------------------------------------------------------ sampling

def _load_pipeline(tokenizer_path, generator_path, head_path):
    tokenizer, _ = ckpt.load_tokenizer_checkpoint(tokenizer_path)
    model, conditioner, stats, _ = ckpt.load_generator_checkpoint(generator_path)
    head = ckpt.load_head_checkpoint(head_path)
    return tokenizer, model, conditioner, stats, head


def _generate_batch(model, head, tokenizer, stats, conditioner, classes, sampler_cfg,
                    batch_size=64):
    schedule = NoiseSchedule(head.config.train_timesteps)
    grid = (model.config.max_grid, model.config.max_grid)
    images = []
    with torch.no_grad():
        for start in range(0, len(classes), batch_size):
            chunk = classes[start:start + batch_size]
            cond = conditioner(chunk)
            cfg = dataclasses.replace(sampler_cfg, seed=sampler_cfg.seed + start)
            images.append(generate(model, head, tokenizer, schedule, stats, cond,
                                   grid, cfg))
    return torch.cat(images)


def _to_png(tensor: torch.Tensor) -> Image.Image:
    array = ((tensor.clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    return Image.fromarray(array.permute(1, 2, 0).numpy())


def _parse_classes(classes, num, num_classes):
    if classes:
        ids = [int(c) for c in classes.split(",")]
    else:
        ids = [i % num_classes for i in range(num)]
    bad = [i for i in ids if not 0 <= i < num_classes]
    if bad:
        raise ConfigurationError(f"class ids {bad} outside [0, {num_classes})")
    return torch.tensor(ids, dtype=torch.long)


@main.command("sample")
@click.option("--tokenizer", "tokenizer_path", required=True, type=click.Path(exists=True))
@click.option("--generator", "generator_path", required=True, type=click.Path(exists=True))
@click.option("--head", "head_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--classes", default=None, help="comma-separated class ids")
@click.option("--num", default=9, show_default=True, help="count when --classes is absent")
@click.option("--steps", default=12, show_default=True)
@click.option("--temperature", default=4.5, show_default=True)
@click.option("--cfg-scale", default=4.5, show_default=True)
@click.option("--diffusion-steps", default=20, show_default=True)
@click.option("--discrete-only", is_flag=True, default=False)
@click.option("--seed", type=int, default=0, show_default=True)
@cli_errors
def cmd_sample(tokenizer_path, generator_path, head_path, out, classes, num, steps,
               temperature, cfg_scale, diffusion_steps, discrete_only, seed):
    """Generate images and a manifest."""
    tokenizer, model, conditioner, stats, head = _load_pipeline(
        tokenizer_path, generator_path, head_path)
    ids = _parse_classes(classes, num, conditioner.num_classes)
    sampler_cfg = SamplerConfig(steps=steps, temperature=temperature,
                                cfg_scale=cfg_scale, diffusion_steps=diffusion_steps,
                                seed=seed, discrete_only=discrete_only)
    images = _generate_batch(model, head, tokenizer, stats, conditioner, ids, sampler_cfg)

    out.mkdir(parents=True, exist_ok=True)
    names = class_names()
    manifest = {
        "seed": seed,
        "config_hash": ckpt.config_hash({
            "sampler": dataclasses.asdict(sampler_cfg),
            "tokenizer": dataclasses.asdict(tokenizer.config),
            "generator": dataclasses.asdict(model.config),
            "head": dataclasses.asdict(head.config),
        }),
        "sampler": dataclasses.asdict(sampler_cfg),
        "images": [],
    }
    for i, (img, cid) in enumerate(zip(images, ids.tolist())):
        filename = f"sample_{i:04d}.png"
        _to_png(img).save(out / filename)
        label = names[cid] if cid < len(names) else str(cid)
        manifest["images"].append({"file": filename, "class_id": cid, "condition": label})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    click.echo(f"wrote {len(images)} images to {out}")


# ---------------------------------------------------------------- evaluation

def _reconstruction_metrics(tokenizer, images, batch_size=64) -> dict:
    tokenizer.eval()
    out: dict = {}
    with torch.no_grad():
        for path in ("continuous", "discrete"):
            recon = torch.cat([
                tokenizer.reconstruct(images[s:s + batch_size], path, update_usage=False)
                for s in range(0, images.shape[0], batch_size)])
            out[f"psnr_{path}"] = psnr(recon, images)
            out[f"ssim_{path}"] = ssim(recon, images)
            out[f"mse_{path}"] = float((recon - images).pow(2).mean().item())
        tokenizer.quantizer.reset_usage()
        for s in range(0, images.shape[0], batch_size):
            tokenizer.quantizer.quantize(tokenizer.encode(images[s:s + batch_size]))
        out["codebook_utilization"] = tokenizer.quantizer.usage_report().utilization
    return out


@main.command("evaluate")
@click.option("--tokenizer", "tokenizer_path", required=True, type=click.Path(exists=True))
@click.option("--generator", "generator_path", type=click.Path(exists=True))
@click.option("--head", "head_path", type=click.Path(exists=True))
@click.option("--data", "data_root", required=True, type=click.Path(exists=True))
@click.option("--resolution", type=int, default=32, show_default=True)
@click.option("--num-generate", default=128, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@cli_errors
def cmd_evaluate(tokenizer_path, generator_path, head_path, data_root, resolution,
                 num_generate, out_path, seed):
    """Reconstruction metrics (both paths) and, with a generator, a generation
    Frechet-proxy score."""
    torch.manual_seed(seed)
    tokenizer, _ = ckpt.load_tokenizer_checkpoint(tokenizer_path)
    val_images, _ = load_split(DatasetSpec(root=data_root, resolution=resolution,
                                           split="val"))
    report = _reconstruction_metrics(tokenizer, val_images)
    extractor = RandomFeatureExtractor(seed=1234)

    if generator_path:
        if head_path is None:
            raise ConfigurationError("--generator requires --head")
        model, conditioner, stats, _ = ckpt.load_generator_checkpoint(generator_path)
        head = ckpt.load_head_checkpoint(head_path)
        ids = torch.tensor([i % conditioner.num_classes for i in range(num_generate)])
        images = _generate_batch(model, head, tokenizer, stats, conditioner, ids,
                                 SamplerConfig(seed=seed))
        gen_res = images.shape[-1]
        ref = val_images
        if gen_res != resolution:
            ref, _ = load_split(DatasetSpec(root=data_root, resolution=gen_res, split="val"))
        report["fid_proxy_generation"] = fid_proxy(images, ref, extractor)

    metric = MetricReport(psnr=report["psnr_discrete"], ssim=report["ssim_discrete"],
                          fid_proxy=report.get("fid_proxy_generation"),
                          codebook_utilization=report["codebook_utilization"],
                          counts={"val_images": int(val_images.shape[0])})
    rows = [{"metric": k, "value": _fmt(v)} for k, v in sorted(report.items())]
    click.echo(_table(rows, ["metric", "value"]))
    if out_path:
        payload = {"report": report, "summary": metric.to_dict(), "seed": seed}
        Path(out_path).write_text(json.dumps(payload, indent=2, sort_keys=True))
    return report


# ----------------------------------------------------------------- profiling

@main.command("profile")
@click.option("--tokenizer", "tokenizer_path", required=True, type=click.Path(exists=True))
@click.option("--generator", "generator_path", required=True, type=click.Path(exists=True))
@click.option("--head", "head_path", required=True, type=click.Path(exists=True))
@click.option("--steps", default=12, show_default=True)
@click.option("--diffusion-steps", default=20, show_default=True)
@click.option("--batch-sizes", default="1,16", show_default=True)
@click.option("--warmup", default=2, show_default=True)
@click.option("--runs", default=5, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@cli_errors
def cmd_profile(tokenizer_path, generator_path, head_path, steps, diffusion_steps,
                batch_sizes, warmup, runs, out_path, seed):
    """Median latency (batch 1) and throughput (batch 16) of the sampler."""
    tokenizer, model, conditioner, stats, head = _load_pipeline(
        tokenizer_path, generator_path, head_path)
    schedule = NoiseSchedule(head.config.train_timesteps)
    grid = (model.config.max_grid, model.config.max_grid)
    sizes = tuple(int(s) for s in batch_sizes.split(","))

    def run(batch_size):
        ids = torch.tensor([i % conditioner.num_classes for i in range(batch_size)])
        cfg = SamplerConfig(steps=steps, diffusion_steps=diffusion_steps, seed=seed)
        generate(model, head, tokenizer, schedule, stats, conditioner(ids), grid, cfg)

    report = run_profile(run, batch_sizes=sizes, warmup_runs=warmup, timed_runs=runs)
    rows = [{"field": k, "value": _fmt(v) if isinstance(v, float) else v}
            for k, v in report.to_dict().items()]
    click.echo(_table(rows, ["field", "value"]))
    if out_path:
        Path(out_path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return report


# ----------------------------------------------------------------- ablations

@main.group()
def ablate():
    """Desk-scale ablation experiments."""


@ablate.command("strategies")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=None)
@cli_errors
def cmd_ablate_strategies(config_path, data_root, out, seed):
    """Train all three tokenizer strategies on the same data and seed."""
    config = _resolve_config(config_path, seed)
    out.mkdir(parents=True, exist_ok=True)
    (train_images, _), (val_images, _) = _datasets(config, data_root)
    rows = []
    for strategy in STRATEGIES:
        torch.manual_seed(config.seed)
        model = HybridTokenizer(config.tokenizer)
        trainer = TokenizerTrainer(model, config.tokenizer_train, seed=config.seed)
        trainer.run_strategy(train_images, val_images, strategy)
        final = trainer.history[-1]
        rows.append({"strategy": strategy,
                     "val_mse_discrete": final["val_mse_discrete"],
                     "val_mse_continuous": final["val_mse_continuous"]})
        ckpt.save_tokenizer_checkpoint(out / f"tokenizer_{strategy}.ckpt", model,
                                       trainer.completed_stages, trainer.generator)
        _write_jsonl(out / f"metrics_{strategy}.jsonl", trainer.history)
    display = [{k: _fmt(v) for k, v in r.items()} for r in rows]
    click.echo(_table(display, ["strategy", "val_mse_discrete", "val_mse_continuous"]))
    (out / "strategies.json").write_text(json.dumps(rows, indent=2, sort_keys=True))


@ablate.command("steps")
@click.option("--tokenizer", "tokenizer_path", required=True, type=click.Path(exists=True))
@click.option("--generator", "generator_path", required=True, type=click.Path(exists=True))
@click.option("--head", "head_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", required=True, type=click.Path(exists=True))
@click.option("--steps-list", default="4,8,12,16,24", show_default=True)
@click.option("--num", default=128, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@cli_errors
def cmd_ablate_steps(tokenizer_path, generator_path, head_path, data_root, steps_list,
                     num, out_path, seed):
    """Quality (Frechet proxy) as a function of the unmasking step count."""
    tokenizer, model, conditioner, stats, head = _load_pipeline(
        tokenizer_path, generator_path, head_path)
    resolution = model.config.max_grid * tokenizer.config.compression_factor
    ref, _ = load_split(DatasetSpec(root=data_root, resolution=resolution, split="val"))
    extractor = RandomFeatureExtractor(seed=1234)
    ids = torch.tensor([i % conditioner.num_classes for i in range(num)])
    rows = []
    for k in (int(s) for s in steps_list.split(",")):
        images = _generate_batch(model, head, tokenizer, stats, conditioner, ids,
                                 SamplerConfig(steps=k, seed=seed))
        rows.append({"steps": k, "fid_proxy": fid_proxy(images, ref, extractor)})
    display = [{k: _fmt(v) for k, v in r.items()} for r in rows]
    click.echo(_table(display, ["steps", "fid_proxy"]))
    if out_path:
        Path(out_path).write_text(json.dumps(rows, indent=2, sort_keys=True))
    return rows


@ablate.command("hybrid")
@click.option("--tokenizer", "tokenizer_path", required=True, type=click.Path(exists=True))
@click.option("--generator", "generator_path", required=True, type=click.Path(exists=True))
@click.option("--head", "head_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", required=True, type=click.Path(exists=True))
@click.option("--num", default=128, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@cli_errors
def cmd_ablate_hybrid(tokenizer_path, generator_path, head_path, data_root, num,
                      out_path, seed):
    """Hybrid generation versus the discrete-only baseline on one checkpoint."""
    tokenizer, model, conditioner, stats, head = _load_pipeline(
        tokenizer_path, generator_path, head_path)
    resolution = model.config.max_grid * tokenizer.config.compression_factor
    ref, _ = load_split(DatasetSpec(root=data_root, resolution=resolution, split="val"))
    extractor = RandomFeatureExtractor(seed=1234)
    ids = torch.tensor([i % conditioner.num_classes for i in range(num)])
    rows = []
    for mode, discrete_only in (("hybrid", False), ("discrete-only", True)):
        images = _generate_batch(model, head, tokenizer, stats, conditioner, ids,
                                 SamplerConfig(seed=seed, discrete_only=discrete_only))
        rows.append({"mode": mode, "fid_proxy": fid_proxy(images, ref, extractor)})
    display = [{k: _fmt(v) for k, v in r.items()} for r in rows]
    click.echo(_table(display, ["mode", "fid_proxy"]))
    if out_path:
        Path(out_path).write_text(json.dumps(rows, indent=2, sort_keys=True))
    return rows


if __name__ == "__main__":
    main()
