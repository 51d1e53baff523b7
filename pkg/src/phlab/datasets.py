"""Labeled image sets: a seeded synthetic generator with class structure and
ingestion of ``root/<class_name>/<image files>`` directories."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from phlab.imaging import DecodeError, Image, read_image

IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm", ".png")


class EmptyDatasetError(ValueError):
    pass


class DatasetFileError(DecodeError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = Path(path)


@dataclass(frozen=True)
class LabeledDataset:
    images: tuple
    labels: tuple
    class_names: tuple
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "labels", tuple(int(c) for c in self.labels))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        n = len(self.class_names)
        if any(not 0 <= c < n for c in self.labels):
            raise ValueError("label out of range for class_names")
        if self.split not in ("train", "validation"):
            raise ValueError(f"split must be train or validation, got {self.split!r}")

    def __len__(self):
        return len(self.images)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def indices_of(self, label: int) -> list[int]:
        return [i for i, c in enumerate(self.labels) if c == label]

    def subset(self, indices, split: str | None = None) -> "LabeledDataset":
        idx = list(indices)
        return LabeledDataset(
            [self.images[i] for i in idx],
            [self.labels[i] for i in idx],
            self.class_names,
            split or self.split,
        )

    def take_per_class(self, n: int) -> "LabeledDataset":
        """The first ``n`` images of every class, in class order."""
        idx = [i for c in range(self.class_count) for i in self.indices_of(c)[:n]]
        return self.subset(idx)


def split_by_parity(ds: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
    """Even within-class positions go to train, odd ones to validation."""
    train, val = [], []
    for c in range(ds.class_count):
        for j, i in enumerate(ds.indices_of(c)):
            (train if j % 2 == 0 else val).append(i)
    return ds.subset(sorted(train), "train"), ds.subset(sorted(val), "validation")


# --------------------------------------------------------------------------
# Synthetic classes


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 10
    per_class: int = 25
    image_size: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.class_count, self.per_class, self.image_size) <= 0:
            raise ValueError("SyntheticSpec fields must be positive")


MOTIFS = ("disc", "square", "triangle", "cross", "ring", "stripes", "diamond", "bar", "checker", "dots")


def _motif_mask(kind: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # u, v: coordinates in the motif frame, unit radius ~ 1
    r = np.hypot(u, v)
    if kind == "disc":
        m = r < 1.0
    elif kind == "square":
        m = np.maximum(abs(u), abs(v)) < 0.85
    elif kind == "triangle":
        m = (v < 0.8) & (v > -0.8 + 2 * abs(u) * 0.95)
    elif kind == "cross":
        m = ((abs(u) < 0.3) | (abs(v) < 0.3)) & (np.maximum(abs(u), abs(v)) < 1.0)
    elif kind == "ring":
        m = (r < 1.0) & (r > 0.55)
    elif kind == "stripes":
        m = (np.maximum(abs(u), abs(v)) < 1.0) & (np.floor((v + 1.0) * 2.5) % 2 == 0)
    elif kind == "diamond":
        m = abs(u) + abs(v) < 1.0
    elif kind == "bar":
        m = (abs(u) < 1.0) & (abs(v) < 0.35)
    elif kind == "checker":
        m = (np.maximum(abs(u), abs(v)) < 1.0) & ((np.floor((u + 1) * 2) + np.floor((v + 1) * 2)) % 2 == 0)
    elif kind == "dots":
        m = (np.hypot(abs(u) - 0.5, abs(v) - 0.5) < 0.33)
    else:
        raise ValueError(kind)
    return m.astype(np.float64)


def _hue_rgb(h: float) -> np.ndarray:
    k = (np.array([0.0, 8.0, 4.0]) + h * 12.0) % 12.0
    return 0.5 - 0.5 * np.clip(np.minimum(k - 3.0, 9.0 - k), -1.0, 1.0)


def _render(c: int, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.image_size
    grid = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    yy, xx = np.meshgrid(grid, grid, indexing="ij")

    theta = 2 * np.pi * c / spec.class_count + rng.uniform(-0.3, 0.3)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    tint = _hue_rgb(c / spec.class_count) + rng.uniform(-0.1, 0.1, 3)
    img = 0.5 + 0.3 * ramp[..., None] * (2 * np.clip(tint, 0, 1) - 1)[None, None, :]

    scale = 0.45 * rng.uniform(0.8, 1.2)
    cx, cy = rng.uniform(-0.15, 0.15, 2)
    rot = rng.uniform(-0.2, 0.2)
    du, dv = (xx - cx) / scale, (yy - cy) / scale
    u = np.cos(rot) * du + np.sin(rot) * dv
    v = -np.sin(rot) * du + np.cos(rot) * dv
    mask = _motif_mask(MOTIFS[c % len(MOTIFS)], u, v)[..., None]
    color = np.clip(1.0 - _hue_rgb((c / spec.class_count + 0.5) % 1.0) + rng.uniform(-0.1, 0.1, 3), 0, 1)
    img = img * (1 - 0.8 * mask) + 0.8 * mask * color[None, None, :]

    img = img + rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> LabeledDataset:
    """Render ``per_class`` jittered samples of ``class_count`` classes.

    Each class has its own gradient orientation, palette and shape motif;
    every sample has independent jitter in position, scale, rotation and
    color.  Sample ``j`` of class ``c`` depends only on (seed, c, j).
    """
    root = np.random.SeedSequence(spec.rng_seed)
    class_seqs = root.spawn(spec.class_count)
    images, labels = [], []
    for c, seq in enumerate(class_seqs):
        for j, child in enumerate(seq.spawn(spec.per_class)):
            rng = np.random.Generator(np.random.Philox(child))
            images.append(Image(_render(c, spec, rng), image_id=f"c{c}_{j:04d}"))
            labels.append(c)
    names = [f"class{c}_{MOTIFS[c % len(MOTIFS)]}" for c in range(spec.class_count)]
    return LabeledDataset(images, labels, names)


def random_images(n: int, size: int, seed: int, channels: int = 3):
    """Independently seeded uniform-noise images, one Philox stream each."""
    for child in np.random.SeedSequence(seed).spawn(n):
        rng = np.random.Generator(np.random.Philox(child))
        yield Image(rng.random((size, size, channels)))


def noise_sampler(size: int, seed: int, channels: int = 3):
    """A callable drawing a fresh uniform-noise image each call."""
    rng = np.random.Generator(np.random.Philox(seed))
    return lambda: Image(rng.random((size, size, channels)))


# --------------------------------------------------------------------------
# Directory ingestion


def load_directory(root) -> LabeledDataset:
    root = Path(root)
    if not root.is_dir():
        raise EmptyDatasetError(f"{root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    images, labels, names = [], [], []
    for c, d in enumerate(class_dirs):
        names.append(d.name)
        for f in sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
            try:
                img = read_image(f)
            except (DecodeError, OSError) as exc:
                raise DatasetFileError(f, exc) from exc
            images.append(Image(img.data, image_id=f"{d.name}/{f.stem}"))
            labels.append(c)
    if not images:
        raise EmptyDatasetError(f"no images found under {root}")
    return LabeledDataset(images, labels, names)


def write_manifest(ds: LabeledDataset, path) -> None:
    """Write ``path,label`` rows; paths are rebuilt from image ids."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"])
        for img, label in zip(ds.images, ds.labels):
            w.writerow([img.image_id, label])
