"""Image container, raster I/O, resampling, interpolation and SSIM.

Images are float64 arrays of shape (height, width, channels) with samples
in [0, 1].  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_C1 = 0.01
SSIM_C2 = 0.03
WEIGHT_SUM_TOL = 1e-9


class DecodeError(ValueError):
    """Raised when an encoded raster cannot be parsed."""


class UnsupportedFormatError(DecodeError):
    """Raised for well-formed rasters using features we do not read."""


class ShapeError(ValueError):
    """Raised when images that must share a shape do not."""


class WeightsError(ValueError):
    """Raised when interpolation weights violate sum(|p|) == 1."""


class Image:
    """An immutable normalized pixel tensor.

    ``image_id`` is an optional tag (usually the file stem) used by the
    feature-file embedder to look up precomputed features.
    """

    __slots__ = ("data", "image_id")

    def __init__(self, data, image_id: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ShapeError(f"expected (h, w, 1|3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError("image must have positive width and height")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image samples must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "image_id", image_id)

    def __setattr__(self, name, value):
        raise AttributeError("Image is immutable")

    @classmethod
    def from_samples(cls, width: int, height: int, channels: int, samples, image_id=None) -> "Image":
        """Build an image from a flat row-major, channel-interleaved sequence."""
        arr = np.asarray(samples, dtype=np.float64)
        if arr.size != width * height * channels:
            raise ShapeError(
                f"{arr.size} samples do not fill {width}x{height}x{channels}"
            )
        return cls(arr.reshape(height, width, channels), image_id)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def samples(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))

    def __repr__(self):
        tag = f", id={self.image_id!r}" if self.image_id else ""
        return f"Image({self.width}x{self.height}x{self.channels}{tag})"


@dataclass(frozen=True)
class PreprocessSpec:
    target_width: int = 32
    target_height: int = 32
    grayscale: bool = False

    def __post_init__(self):
        if self.target_width <= 0 or self.target_height <= 0:
            raise ValueError("target dimensions must be positive")


# --------------------------------------------------------------------------
# Raster I/O

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _decode_pnm(raw: bytes, image_id) -> Image:
    magic = raw[:2]
    channels = 3 if magic == b"P6" else 1
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(raw, pos)
        if m is None:
            raise DecodeError("truncated PNM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise DecodeError(f"bad PNM header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise DecodeError("PNM dimensions must be positive")
    if maxval != 255:
        raise UnsupportedFormatError(f"unsupported PNM maxval {maxval} (only 255)")
    if pos >= len(raw) or raw[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise DecodeError("missing whitespace after PNM header")
    pos += 1
    n = width * height * channels
    body = raw[pos : pos + n]
    if len(body) != n:
        raise DecodeError(f"PNM raster truncated: expected {n} bytes, got {len(body)}")
    values = np.frombuffer(body, dtype=np.uint8).astype(np.float64) / 255.0
    return Image(values.reshape(height, width, channels), image_id)


def _decode_png(raw: bytes, image_id) -> Image:
    from PIL import Image as PILImage

    try:
        pil = PILImage.open(io.BytesIO(raw))
        pil.load()
    except Exception as exc:
        raise DecodeError(f"malformed PNG: {exc}") from None
    if pil.mode in ("I;16", "I;16B", "I", "F"):
        raise UnsupportedFormatError(f"unsupported PNG bit depth (mode {pil.mode})")
    if pil.mode in ("L", "1"):
        pil = pil.convert("L")
    else:
        pil = pil.convert("RGB")
    arr = np.asarray(pil, dtype=np.uint8).astype(np.float64) / 255.0
    return Image(arr, image_id)


def decode_image(raw: bytes, image_id: str | None = None) -> Image:
    """Decode a binary PPM (P6), PGM (P5) or 8-bit PNG stream."""
    if raw[:2] in (b"P5", b"P6"):
        return _decode_pnm(raw, image_id)
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(raw, image_id)
    if raw[:2] in (b"P1", b"P2", b"P3", b"P4"):
        raise UnsupportedFormatError("only binary P5/P6 PNM files are supported")
    raise DecodeError("unrecognized image header")


def encode_ppm(img: Image) -> bytes:
    """Encode as P6 (RGB) or P5 (gray), maxval 255, canonical single-space header."""
    magic = b"P6" if img.channels == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    body = np.rint(img.data * 255.0).astype(np.uint8).tobytes()
    return header + body


def read_image(path) -> Image:
    from pathlib import Path

    path = Path(path)
    return decode_image(path.read_bytes(), image_id=path.stem)


def write_ppm(img: Image, path) -> None:
    from pathlib import Path

    Path(path).write_bytes(encode_ppm(img))


# --------------------------------------------------------------------------
# Resampling


def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel centers; clamps at the borders
    if n_in == n_out:
        idx = np.arange(n_in)
        return idx, idx, np.zeros(n_in)
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def to_grayscale(img: Image) -> Image:
    if img.channels == 1:
        return img
    gray = np.clip(img.data @ LUMA_WEIGHTS, 0.0, 1.0)
    return Image(gray[:, :, None], img.image_id)


def resize_bilinear(img: Image, spec: PreprocessSpec) -> Image:
    """Resample to the target dimensions (and optionally to gray).

    The map is linear in the pixel values, so interpolation commutes with it.
    """
    if spec.grayscale:
        img = to_grayscale(img)
    h, w = spec.target_height, spec.target_width
    if (img.height, img.width) == (h, w):
        return img
    data = img.data
    lo, hi, f = _bilinear_axis(img.height, h)
    f = f[:, None, None]
    data = data[lo] * (1.0 - f) + data[hi] * f
    lo, hi, f = _bilinear_axis(img.width, w)
    f = f[None, :, None]
    data = data[:, lo] * (1.0 - f) + data[:, hi] * f
    return Image(np.clip(data, 0.0, 1.0), img.image_id)


# --------------------------------------------------------------------------
# Interpolation


def _check_same_shape(images: Sequence[Image]) -> None:
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise ShapeError(f"images differ in shape: {sorted(shapes)}")


def interpolate(x1: Image, x2: Image, alpha: float) -> Image:
    """Return alpha * x1 + (1 - alpha) * x2."""
    _check_same_shape([x1, x2])
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 1.0:
        return x1
    if alpha == 0.0:
        return x2
    data = alpha * x1.data + (1.0 - alpha) * x2.data
    return Image(np.clip(data, 0.0, 1.0))


def check_weights(p, k: int | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise WeightsError("weights must be a vector")
    if k is not None and p.size != k:
        raise WeightsError(f"expected {k} weights, got {p.size}")
    if abs(np.abs(p).sum() - 1.0) > WEIGHT_SUM_TOL:
        raise WeightsError(f"sum(|p|) = {np.abs(p).sum()!r}, expected 1")
    return p


def stack_images(database: Sequence[Image]) -> np.ndarray:
    """Stack a homogeneous image list into a (k, h, w, c) array."""
    if not database:
        raise ValueError("database is empty")
    _check_same_shape(database)
    return np.stack([im.data for im in database])


def weighted_sum(stack: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Unclamped sum_i p_i x_i over a pre-stacked database."""
    return np.tensordot(p, stack, axes=1)


def combine(database: Sequence[Image], p, clamp: bool = True) -> Image | np.ndarray:
    """Signed combination sum_i p_i x_i of a database.

    With ``clamp=False`` the raw array is returned, since it may leave [0, 1].
    """
    stack = stack_images(database)
    p = check_weights(p, len(stack))
    raw = weighted_sum(stack, p)
    if not clamp:
        return raw
    return Image(np.clip(raw, 0.0, 1.0))

# --------------------------------------------------------------------------
# SSIM


def _gray_samples(img: Image) -> np.ndarray:
    if img.channels == 1:
        return img.data[:, :, 0].ravel()
    return (img.data @ LUMA_WEIGHTS).ravel()


def ssim(x: Image, y: Image) -> float:
    """Global (single-window) SSIM on the luma channel, c1=0.01, c2=0.03."""
    _check_same_shape([x, y])
    a = _gray_samples(x)
    b = _gray_samples(y)
    mu_a, mu_b = a.mean(), b.mean()
    da, db = a - mu_a, b - mu_b
    var_a, var_b = np.mean(da * da), np.mean(db * db)
    cov = np.mean(da * db)
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(num / den)
