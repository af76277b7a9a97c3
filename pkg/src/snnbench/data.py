"""Dataset ingestion and the synthetic smoke set.

Supported sources: CIFAR-10/CIFAR-100 binary batches, the TinyImageNet
directory layout (64x64 JPEGs, resized here to 32x32), and a deterministic
synthetic blob set for desk-scale training runs. Loaders return pixel values
in [0,1]; callers apply ``normalize`` before feeding a network.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

# ImageNet channel statistics, the standard preprocessing for all three
# real datasets handled here.
NORM_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
NORM_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

CIFAR10_RECORD = 1 + 32 * 32 * 3
CIFAR100_RECORD = 2 + 32 * 32 * 3


@dataclass
class Dataset:
    images: np.ndarray  # [N, 3, H, W] float32
    labels: np.ndarray  # [N] int64
    class_count: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"images {self.images.shape} and labels {self.labels.shape} disagree")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.class_count):
            raise ValueError(
                f"labels outside [0, {self.class_count}): "
                f"min {self.labels.min()}, max {self.labels.max()}")

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, idx: np.ndarray, split: str) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.class_count, split)


def load_cifar_bin(path: str, variant: int = 10, split: str = "train") -> Dataset:
    """Read one CIFAR binary batch file.

    CIFAR-10 records are 3073 bytes (label, then R/G/B planes); CIFAR-100
    records are 3074 bytes (coarse label, fine label, planes) and the fine
    label is kept.
    """
    if variant not in (10, 100):
        raise ValueError(f"variant must be 10 or 100, got {variant}")
    record = CIFAR10_RECORD if variant == 10 else CIFAR100_RECORD
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such dataset file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % record != 0:
        raise ValueError(
            f"{path}: size {raw.size} is not a multiple of the "
            f"{record}-byte record length")
    rows = raw.reshape(-1, record)
    label_col = 0 if variant == 10 else 1
    labels = rows[:, label_col].astype(np.int64)
    pixels = rows[:, record - 3072:].reshape(-1, 3, 32, 32)
    images = pixels.astype(np.float32) / 255.0
    return Dataset(images, labels, class_count=variant, split=split)


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Center-aligned bilinear resampling of a [C,H,W] float image.

    Source coordinates are (dst + 0.5) * scale - 0.5, clipped at the borders;
    for an exact factor-2 shrink this reduces to 2x2 block averaging.
    """
    c, h, w = image.shape
    if (h, w) == (out_h, out_w):
        return image.astype(np.float32, copy=True)

    def axis_coords(n_out: int, n_in: int):
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac.astype(np.float32)

    y0, y1, fy = axis_coords(out_h, h)
    x0, x1, fx = axis_coords(out_w, w)
    img = image.astype(np.float32)
    top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
    bot = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
    return top * (1 - fy)[None, :, None] + bot * fy[None, :, None]


def _decode_image(path: str) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)  # [3,H,W]


def load_tinyimagenet(root: str, split: str = "train", size: int = 32) -> Dataset:
    """Load the TinyImageNet directory tree, resizing 64x64 images down.

    Expects ``wnids.txt`` at the root naming the class ids; ids map to labels
    in sorted order. The train split uses train/<wnid>/images/*, the val
    split uses val/images/* with val/val_annotations.txt.
    """
    wnids_path = os.path.join(root, "wnids.txt")
    if not os.path.isfile(wnids_path):
        raise FileNotFoundError(f"missing class mapping file: {wnids_path}")
    with open(wnids_path, "r", encoding="utf-8") as f:
        wnids = sorted(line.strip() for line in f if line.strip())
    label_of = {wnid: i for i, wnid in enumerate(wnids)}

    entries: list[tuple[str, int]] = []
    if split == "train":
        train_dir = os.path.join(root, "train")
        for wnid in sorted(os.listdir(train_dir)):
            if wnid not in label_of:
                raise ValueError(f"unknown class id {wnid!r} under {train_dir}")
            img_dir = os.path.join(train_dir, wnid, "images")
            for fname in sorted(os.listdir(img_dir)):
                entries.append((os.path.join(img_dir, fname), label_of[wnid]))
    elif split == "val":
        ann_path = os.path.join(root, "val", "val_annotations.txt")
        if not os.path.isfile(ann_path):
            raise FileNotFoundError(f"missing annotations file: {ann_path}")
        img_dir = os.path.join(root, "val", "images")
        with open(ann_path, "r", encoding="utf-8") as f:
            for line in f:
                parts = line.strip().split("\t")
                if len(parts) < 2:
                    continue
                fname, wnid = parts[0], parts[1]
                if wnid not in label_of:
                    raise ValueError(f"unknown class id {wnid!r} in {ann_path}")
                entries.append((os.path.join(img_dir, fname), label_of[wnid]))
    else:
        raise ValueError(f"split must be 'train' or 'val', got {split!r}")

    images = np.empty((len(entries), 3, size, size), dtype=np.float32)
    labels = np.empty(len(entries), dtype=np.int64)
    for i, (path, label) in enumerate(entries):
        images[i] = bilinear_resize(_decode_image(path), size, size)
        labels[i] = label
    return Dataset(images, labels, class_count=len(wnids), split=split)


def normalize(images: np.ndarray) -> np.ndarray:
    """Per-channel (x - mean) / std with the standard ImageNet statistics."""
    images = np.asarray(images, dtype=np.float32)
    return (images - NORM_MEAN[:, None, None]) / NORM_STD[:, None, None]


def denormalize(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float32)
    return images * NORM_STD[:, None, None] + NORM_MEAN[:, None, None]


def synth_blobs(seed: int, classes: int, per_class: int, size: int) -> Dataset:
    """Deterministic Gaussian-blob images, one blob placement per class.

    Class c paints a soft blob at a fixed angle around the image center with
    a class-specific color; mild pixel noise keeps training nontrivial. The
    classes are linearly separable by construction, so a nearest-centroid
    rule solves the set, which makes this a fair smoke test for a trainable
    network.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if per_class < 1 or size < 4:
        raise ValueError(f"bad synth shape: per_class={per_class} size={size}")
    rng = np.random.default_rng(seed)
    n = classes * per_class
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float32),
                         np.arange(size, dtype=np.float32), indexing="ij")
    center = (size - 1) / 2.0
    radius = size / 4.0
    sigma = size / 6.0
    palette = np.array([
        [1.0, 0.2, 0.2], [0.2, 1.0, 0.2], [0.2, 0.2, 1.0], [1.0, 1.0, 0.2],
        [1.0, 0.2, 1.0], [0.2, 1.0, 1.0], [0.9, 0.6, 0.1], [0.5, 0.5, 1.0],
    ], dtype=np.float32)

    images = np.empty((n, 3, size, size), dtype=np.float32)
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    for c in range(classes):
        angle = 2.0 * np.pi * c / classes
        cy = center + radius * np.sin(angle)
        cx = center + radius * np.cos(angle)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
        color = palette[c % len(palette)]
        base = blob[None] * color[:, None, None]
        lo = c * per_class
        noise = rng.normal(0.0, 0.05, size=(per_class, 3, size, size))
        images[lo:lo + per_class] = np.clip(base[None] + noise, 0.0, 1.0)
    return Dataset(images, labels, class_count=classes, split="train")


def train_val_split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then carve off ``fraction`` of the samples as val."""
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    n = len(dataset)
    n_val = int(round(n * fraction))
    n_val = min(max(n_val, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    return dataset.subset(train_idx, "train"), dataset.subset(val_idx, "val")
