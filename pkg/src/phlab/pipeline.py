"""Perceptual hash pipeline: preprocess -> embed -> hyperplane LSH -> 96 bits.

An optional SHA-256 stage can be appended to the end of the pipeline.  All
randomness comes from counter-based Philox streams keyed by the config
seeds, so a config fully determines the hash function.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from phlab.imaging import Image, PreprocessSpec, resize_bilinear

FEATURE_DIM = 128
HASH_BITS = 96
HASH_BYTES = HASH_BITS // 8
TANH_GAIN = 0.5

EMBEDDERS = ("linear-surrogate", "tanh-surrogate", "feature-file")
DEFENSES = ("none", "sha-at-the-end")


class MissingFeatureError(KeyError):
    """The feature-file embedder has no vector for the requested image id."""


def philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


class BinaryHash:
    """A 96-bit hash.

    ``bits`` is the {0, 1} view and ``signed`` the {-1, 1} view (2b - 1).
    Hex form packs bit 0 into the most significant bit of byte 0.
    """

    __slots__ = ("bits",)

    def __init__(self, bits):
        b = np.asarray(bits)
        if b.shape != (HASH_BITS,):
            raise ValueError(f"expected {HASH_BITS} bits, got shape {b.shape}")
        if not np.all((b == 0) | (b == 1)):
            raise ValueError("bits must be 0 or 1")
        b = b.astype(np.uint8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    def __setattr__(self, name, value):
        raise AttributeError("BinaryHash is immutable")

    @property
    def signed(self) -> np.ndarray:
        return 2.0 * self.bits - 1.0

    @classmethod
    def from_signed(cls, s) -> "BinaryHash":
        return cls((np.asarray(s) > 0).astype(np.uint8))

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "BinaryHash":
        if len(raw) != HASH_BYTES:
            raise ValueError(f"expected {HASH_BYTES} bytes, got {len(raw)}")
        return cls(np.unpackbits(np.frombuffer(raw, dtype=np.uint8)))

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "BinaryHash":
        text = text.strip().lower()
        if len(text) != 2 * HASH_BYTES:
            raise ValueError(f"expected {2 * HASH_BYTES} hex characters, got {len(text)}")
        return cls.from_bytes(bytes.fromhex(text))

    def __eq__(self, other):
        if not isinstance(other, BinaryHash):
            return NotImplemented
        return bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash(self.to_bytes())

    def __str__(self):
        return self.hex()

    def __repr__(self):
        return f"BinaryHash({self.hex()!r})"


def hamming_similarity(h1: BinaryHash, h2: BinaryHash) -> float:
    """Fraction of the 96 bit positions on which two hashes agree."""
    return float(np.count_nonzero(h1.bits == h2.bits)) / HASH_BITS


def sha_block(h: BinaryHash) -> BinaryHash:
    """SHA-256 of the 12 packed hash bytes, truncated back to 96 bits."""
    digest = hashlib.sha256(h.to_bytes()).digest()
    return BinaryHash.from_bytes(digest[:HASH_BYTES])


@dataclass(frozen=True)
class HashingMatrix:
    rows: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.shape != (HASH_BITS, FEATURE_DIM):
            raise ValueError(f"hashing matrix must be {HASH_BITS}x{FEATURE_DIM}, got {rows.shape}")
        if np.any(np.linalg.norm(rows, axis=1) == 0):
            raise ValueError("hyperplane normals must be nonzero")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_seed(cls, seed: int) -> "HashingMatrix":
        return cls(philox(seed).standard_normal((HASH_BITS, FEATURE_DIM)), seed)


def lsh_hash(f, m: HashingMatrix) -> BinaryHash:
    """bit j = 1 iff row_j . f >= 0."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (FEATURE_DIM,) or not np.all(np.isfinite(f)):
        raise ValueError("feature vector must hold 128 finite values")
    return BinaryHash((m.rows @ f >= 0).astype(np.uint8))


def load_feature_file(path) -> dict[str, np.ndarray]:
    """Parse lines of ``image_id,v1,...,v128``; blank and ``#`` lines skipped."""
    table = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split(",")
        if len(vals) != FEATURE_DIM:
            raise ValueError(f"{path}:{lineno}: expected {FEATURE_DIM} values, got {len(vals)}")
        vec = np.array([float(v) for v in vals])
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{path}:{lineno}: non-finite feature value")
        table[key.strip()] = vec
    return table


@dataclass(frozen=True)
class PipelineConfig:
    embedder: str = "tanh-surrogate"
    embedder_seed: int = 1
    matrix_seed: int = 2
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)
    defense: str = "none"
    feature_file: str | None = None

    def __post_init__(self):
        if self.embedder not in EMBEDDERS:
            raise ValueError(f"unknown embedder {self.embedder!r}; choose from {EMBEDDERS}")
        if self.defense not in DEFENSES:
            raise ValueError(f"unknown defense {self.defense!r}; choose from {DEFENSES}")
        if self.embedder == "feature-file" and not self.feature_file:
            raise ValueError("feature-file embedder needs a feature_file path")

    def with_defense(self, defense: str) -> "PipelineConfig":
        return replace(self, defense=defense)


class Pipeline:
    """The hash function determined by a :class:`PipelineConfig`.

    Calling the object hashes an image, which makes it usable directly as an
    attack oracle.  Instances are read-only after construction.
    """

    def __init__(self, cfg: PipelineConfig = PipelineConfig(), features: Mapping[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.matrix = HashingMatrix.from_seed(cfg.matrix_seed)
        spec = cfg.preprocess
        self.input_dim = spec.target_width * spec.target_height * (1 if spec.grayscale else 3)
        self._features = None
        self._projection = None
        if cfg.embedder == "feature-file":
            self._features = dict(features) if features is not None else load_feature_file(cfg.feature_file)
        else:
            # scaled so projections of a normalized image stay O(1)
            w = philox(cfg.embedder_seed).standard_normal((FEATURE_DIM, self.input_dim))
            self._projection = w / np.sqrt(self.input_dim)
            self._projection.setflags(write=False)

    @property
    def projection(self) -> np.ndarray:
        return self._projection

    def preprocess(self, img: Image) -> Image:
        return resize_bilinear(img, self.cfg.preprocess)

    def embed(self, img: Image) -> np.ndarray:
        if self._features is not None:
            if img.image_id is None or img.image_id not in self._features:
                raise MissingFeatureError(f"no feature vector for image id {img.image_id!r}")
            return self._features[img.image_id].copy()
        x = self.preprocess(img)
        f = self._projection @ (2.0 * x.samples - 1.0)
        if self.cfg.embedder == "tanh-surrogate":
            f = np.tanh(TANH_GAIN * f)
        return f

    def perceptual_hash(self, img: Image) -> BinaryHash:
        """The 96-bit hash before any defense stage."""
        return lsh_hash(self.embed(img), self.matrix)

    def hash_image(self, img: Image) -> BinaryHash:
        h = self.perceptual_hash(img)
        if self.cfg.defense == "sha-at-the-end":
            h = sha_block(h)
        return h

    __call__ = hash_image

    def oracle(self) -> Callable[[Image], BinaryHash]:
        """An opaque closure over :meth:`hash_image` exposing nothing else."""
        hash_image = self.hash_image
        return lambda img: hash_image(img)


@lru_cache(maxsize=8)
def build_pipeline(cfg: PipelineConfig) -> Pipeline:
    return Pipeline(cfg)


def embed(img: Image, cfg: PipelineConfig) -> np.ndarray:
    return build_pipeline(cfg).embed(img)


def hash_image(img: Image, cfg: PipelineConfig) -> BinaryHash:
    return build_pipeline(cfg).hash_image(img)
