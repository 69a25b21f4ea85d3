"""Dataset ingestion and the self-contained shapes-and-colors corpus.

Folder layout is ``root/split/class_name/*.png`` (jpg also accepted).  Loaded
images are center-cropped to a square, resized with an antialiased bilinear
filter, and normalized so pixel 0 maps to -1.0 and 255 to +1.0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .diffusion import ResidualStats

log = logging.getLogger(__name__)

COLORS = {
    "red": (220, 50, 40),
    "green": (40, 190, 70),
    "blue": (50, 90, 220),
}
SHAPES = ("circle", "square", "triangle")


def class_names() -> list[str]:
    return [f"{color}_{shape}" for color in COLORS for shape in SHAPES]


@dataclass
class DatasetSpec:
    root: Path
    resolution: int
    split: str = "train"
    condition_mode: str = "class_label"  # class_label | embedding_file | none

    def __post_init__(self):
        self.root = Path(self.root)
        if self.split not in ("train", "val"):
            raise ValueError("split must be 'train' or 'val'")
        if self.condition_mode not in ("class_label", "embedding_file", "none"):
            raise ValueError(f"unknown condition mode {self.condition_mode!r}")


def _shape_mask(shape: str, size: int, cx: float, cy: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    dx = xx - cx
    dy = yy - cy
    if shape == "circle":
        return dx ** 2 + dy ** 2 <= radius ** 2
    if shape == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) <= radius
    if shape == "triangle":
        # upward triangle: below the apex, inside the two slanted edges
        return (dy >= -radius) & (dy <= radius) & (np.abs(dx) <= (dy + radius) / 2)
    raise ValueError(f"unknown shape {shape!r}")


def render_shape_image(class_id: int, resolution: int, rng: np.random.Generator) -> np.ndarray:
    """One uint8 HWC image: a colored shape with jittered position/size on a
    grey background.  Rasterized at 2x and box-downsampled for soft edges."""
    color_name = list(COLORS)[class_id // len(SHAPES)]
    shape = SHAPES[class_id % len(SHAPES)]
    color = np.array(COLORS[color_name], dtype=np.float64)

    hi = resolution * 2
    background = rng.uniform(25, 80)
    img = np.full((hi, hi, 3), background, dtype=np.float64)
    img += rng.normal(0, 4, size=(hi, hi, 1))

    radius = rng.uniform(0.22, 0.36) * hi
    cx = rng.uniform(radius, hi - radius)
    cy = rng.uniform(radius, hi - radius)
    mask = _shape_mask(shape, hi, cx, cy, radius)
    tint = color * rng.uniform(0.8, 1.1)
    img[mask] = tint.clip(0, 255)

    img = img.reshape(resolution, 2, resolution, 2, 3).mean(axis=(1, 3))
    return img.clip(0, 255).astype(np.uint8)


def generate_shapes_corpus(root: str | Path, resolution: int = 64,
                           per_class_train: int = 64, per_class_val: int = 16,
                           seed: int = 0) -> Path:
    """Write the procedural corpus in the image-folder layout; returns root."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for split, per_class in (("train", per_class_train), ("val", per_class_val)):
        for class_id, name in enumerate(class_names()):
            directory = root / split / name
            directory.mkdir(parents=True, exist_ok=True)
            for i in range(per_class):
                img = render_shape_image(class_id, resolution, rng)
                Image.fromarray(img).save(directory / f"{split}_{name}_{i:04d}.png")
    return root


def normalize_pixels(array: np.ndarray) -> torch.Tensor:
    """uint8 HWC -> float32 CHW in [-1, 1]; 0 -> -1.0 and 255 -> +1.0."""
    t = torch.from_numpy(array.astype(np.float32) / 127.5 - 1.0)
    return t.permute(2, 0, 1)


def load_image(path: Path, resolution: int) -> torch.Tensor:
    with Image.open(path) as img:
        img = img.convert("RGB")
        w, h = img.size
        side = min(w, h)
        left = (w - side) // 2
        top = (h - side) // 2
        img = img.crop((left, top, left + side, top + side))
        img = img.resize((resolution, resolution), Image.BILINEAR)
        return normalize_pixels(np.asarray(img))


class ImageFolderDataset:
    """Indexes ``root/split/class_name/*`` once; file order is sorted so the
    dataset is identical across runs."""

    EXTENSIONS = (".png", ".jpg", ".jpeg")

    def __init__(self, spec: DatasetSpec):
        self.spec = spec
        split_dir = spec.root / spec.split
        if not split_dir.is_dir():
            raise ValueError(f"missing split directory {split_dir}")
        self.classes = sorted(p.name for p in split_dir.iterdir() if p.is_dir())
        self.files: list[tuple[Path, int]] = []
        for label, name in enumerate(self.classes):
            for path in sorted((split_dir / name).iterdir()):
                if path.suffix.lower() in self.EXTENSIONS:
                    self.files.append((path, label))
        if not self.files:
            raise ValueError(f"no images found under {split_dir}")

    def __len__(self) -> int:
        return len(self.files)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, int]:
        path, label = self.files[index]
        return load_image(path, self.spec.resolution), label


class BatchLoader:
    """Seed-deterministic shuffled batches; undecodable files are skipped with
    a logged warning."""

    def __init__(self, dataset: ImageFolderDataset, batch_size: int,
                 rng: np.random.Generator, drop_last: bool = False):
        if len(dataset) == 0:
            raise ValueError("empty dataset")
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = rng
        self.drop_last = drop_last

    def __iter__(self):
        order = self.rng.permutation(len(self.dataset))
        batch_images: list[torch.Tensor] = []
        batch_labels: list[int] = []
        for idx in order:
            try:
                image, label = self.dataset[int(idx)]
            except (OSError, ValueError) as exc:
                log.warning("skipping undecodable file %s: %s",
                            self.dataset.files[int(idx)][0], exc)
                continue
            batch_images.append(image)
            batch_labels.append(label)
            if len(batch_images) == self.batch_size:
                yield torch.stack(batch_images), torch.tensor(batch_labels)
                batch_images, batch_labels = [], []
        if batch_images and not self.drop_last:
            yield torch.stack(batch_images), torch.tensor(batch_labels)


def load_split(spec: DatasetSpec) -> tuple[torch.Tensor, torch.Tensor]:
    """Materialize a whole split in file order."""
    ds = ImageFolderDataset(spec)
    images, labels = [], []
    for i in range(len(ds)):
        try:
            img, label = ds[i]
        except (OSError, ValueError) as exc:
            log.warning("skipping undecodable file %s: %s", ds.files[i][0], exc)
            continue
        images.append(img)
        labels.append(label)
    if not images:
        raise ValueError("no decodable images in split")
    return torch.stack(images), torch.tensor(labels)


@torch.no_grad()
def compute_residual_stats(images: torch.Tensor, tokenizer, sample_tokens: int = 10_000,
                           seed: int = 0, batch_size: int = 32) -> ResidualStats:
    """Per-channel mean/std of the residual grids over a fixed-size token
    sample.  Raises for degenerate (near-zero variance) channels."""
    was_training = tokenizer.training
    tokenizer.eval()
    rng = np.random.default_rng(seed)
    collected: list[torch.Tensor] = []
    total = 0
    while total < sample_tokens:
        picks = rng.integers(0, images.shape[0], size=batch_size)
        batch = images[torch.from_numpy(picks)]
        z = tokenizer.encode(batch)
        _, zq = tokenizer.quantizer.quantize(z, update_usage=False)
        zr = (z - zq).permute(0, 2, 3, 1).reshape(-1, z.shape[1])
        collected.append(zr)
        total += zr.shape[0]
    if was_training:
        tokenizer.train()
    vectors = torch.cat(collected)[:sample_tokens]
    mean = vectors.mean(dim=0)
    std = vectors.std(dim=0)
    if (std < 1e-6).any():
        bad = int((std < 1e-6).nonzero()[0].item())
        raise ValueError(f"degenerate residual channel {bad}: std={std[bad]:.3g}")
    return ResidualStats(mean=mean, std=std)
