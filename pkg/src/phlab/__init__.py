"""Perceptual-hash security lab: a hyperplane-LSH hash pipeline, black-box
interpolation attacks against it, and the SHA-at-the-end defense."""

from phlab.imaging import (
    DecodeError,
    Image,
    PreprocessSpec,
    ShapeError,
    UnsupportedFormatError,
    WeightsError,
    combine,
    decode_image,
    encode_ppm,
    interpolate,
    read_image,
    resize_bilinear,
    ssim,
    write_ppm,
)
from phlab.pipeline import (
    BinaryHash,
    HashingMatrix,
    MissingFeatureError,
    Pipeline,
    PipelineConfig,
    embed,
    hamming_similarity,
    hash_image,
    lsh_hash,
    sha_block,
)

__version__ = "0.1.0"
