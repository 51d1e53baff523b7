import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phlab.datasets import SyntheticSpec, generate_synthetic, random_images
from phlab.imaging import Image, interpolate
from phlab.pipeline import (
    HASH_BITS,
    BinaryHash,
    HashingMatrix,
    MissingFeatureError,
    Pipeline,
    PipelineConfig,
    hamming_similarity,
    lsh_hash,
    philox,
    sha_block,
)
from sha256_oracle import sha256

GOLDEN = json.loads((Path(__file__).parent / "golden_hashes.json").read_text())

bits96 = st.lists(st.integers(0, 1), min_size=HASH_BITS, max_size=HASH_BITS).map(BinaryHash)


def golden_image():
    return generate_synthetic(SyntheticSpec(class_count=2, per_class=1, rng_seed=5)).images[1]


# -- BinaryHash -------------------------------------------------------------


@given(bits96)
def test_hex_round_trip_and_signed_view(h):
    assert BinaryHash.from_hex(h.hex()) == h
    assert len(h.hex()) == 24
    np.testing.assert_array_equal(h.signed, 2 * h.bits.astype(float) - 1)
    assert BinaryHash.from_signed(h.signed) == h


def test_hex_packing_is_msb_first():
    bits = np.zeros(96, dtype=int)
    bits[0] = 1
    assert BinaryHash(bits).hex() == "80" + "00" * 11


def test_binary_hash_validation():
    with pytest.raises(ValueError):
        BinaryHash(np.zeros(95))
    with pytest.raises(ValueError):
        BinaryHash(np.full(96, 2))
    with pytest.raises(ValueError):
        BinaryHash.from_hex("abc")


# -- similarity -------------------------------------------------------------


def test_hamming_similarity_cases():
    h = BinaryHash(np.tile([0, 1], 48))
    assert hamming_similarity(h, h) == 1.0
    assert hamming_similarity(h, BinaryHash(1 - h.bits)) == 0.0
    half = h.bits.copy()
    half[:48] = 1 - half[:48]
    assert hamming_similarity(h, BinaryHash(half)) == 0.5


@given(bits96, bits96)
def test_hamming_similarity_matches_signed_dot(a, b):
    assert hamming_similarity(a, b) == pytest.approx((1 + a.signed @ b.signed / 96) / 2, abs=1e-15)


# -- LSH --------------------------------------------------------------------


def test_lsh_zero_vector_ties_to_one():
    m = HashingMatrix.from_seed(2)
    assert lsh_hash(np.zeros(128), m).hex() == "f" * 24 == GOLDEN["lsh_zero"]


def test_lsh_negation_flips_nonzero_projections():
    m = HashingMatrix.from_seed(5)
    f = philox(11).standard_normal(128)
    a, b = lsh_hash(f, m), lsh_hash(-f, m)
    nonzero = m.rows @ f != 0
    assert np.all(a.bits[nonzero] != b.bits[nonzero])


def test_lsh_golden():
    f = philox(7).standard_normal(128)
    assert lsh_hash(f, HashingMatrix.from_seed(2)).hex() == GOLDEN["lsh_seed7_matrix2"]


def test_lsh_rejects_bad_features():
    m = HashingMatrix.from_seed(1)
    with pytest.raises(ValueError):
        lsh_hash(np.zeros(127), m)
    with pytest.raises(ValueError):
        lsh_hash(np.full(128, np.nan), m)


def test_hashing_matrix_shape_and_seed():
    m = HashingMatrix.from_seed(3)
    assert m.rows.shape == (96, 128)
    np.testing.assert_array_equal(m.rows, HashingMatrix.from_seed(3).rows)
    assert not np.array_equal(m.rows, HashingMatrix.from_seed(4).rows)
    with pytest.raises(ValueError):
        HashingMatrix(np.zeros((96, 128)))


# -- embedders --------------------------------------------------------------


def test_linear_embed_of_black_image(linear_pipe):
    black = Image(np.zeros((32, 32, 3)))
    expected = linear_pipe.projection @ -np.ones(32 * 32 * 3)
    np.testing.assert_allclose(linear_pipe.embed(black), expected, rtol=0, atol=1e-12)
    # reproducible from the seed alone
    w = philox(1).standard_normal((128, 3072)) / np.sqrt(3072)
    np.testing.assert_allclose(linear_pipe.embed(black), -w.sum(axis=1), atol=1e-9)


def test_linear_embed_midpoint(linear_pipe, small_ds):
    x1, x2 = small_ds.images[0], small_ds.images[7]
    mid = linear_pipe.embed(interpolate(x1, x2, 0.5))
    np.testing.assert_allclose(mid, (linear_pipe.embed(x1) + linear_pipe.embed(x2)) / 2, atol=1e-9)


@given(st.floats(0, 1))
@settings(max_examples=25, deadline=None)
def test_linear_embed_affine_in_alpha(alpha):
    pipe = Pipeline(PipelineConfig(embedder="linear-surrogate"))
    a, b = list(random_images(2, 32, 9))
    lhs = pipe.embed(interpolate(a, b, alpha))
    rhs = alpha * pipe.embed(a) + (1 - alpha) * pipe.embed(b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_tanh_embed_is_bounded_and_differs(tanh_pipe, linear_pipe, small_ds):
    f = tanh_pipe.embed(small_ds.images[0])
    assert f.shape == (128,) and np.all(np.abs(f) < 1)
    np.testing.assert_allclose(f, np.tanh(0.5 * linear_pipe.embed(small_ds.images[0])))


def test_embed_resizes_other_sizes(tanh_pipe):
    big = Image(np.random.default_rng(0).random((50, 40, 3)))
    assert tanh_pipe.embed(big).shape == (128,)


def test_feature_file_embedder(tmp_path):
    rng = np.random.default_rng(0)
    rows = {"cat": rng.normal(size=128), "dog": rng.normal(size=128)}
    path = tmp_path / "features.txt"
    path.write_text("# id,128 values\n" + "\n".join(k + "," + ",".join(repr(float(v)) for v in vec) for k, vec in rows.items()) + "\n")
    pipe = Pipeline(PipelineConfig(embedder="feature-file", feature_file=str(path)))
    img = Image(np.zeros((4, 4, 3)), image_id="dog")
    np.testing.assert_array_equal(pipe.embed(img), rows["dog"])
    assert pipe(img) == lsh_hash(rows["dog"], pipe.matrix)
    with pytest.raises(MissingFeatureError):
        pipe.embed(Image(np.zeros((4, 4, 3)), image_id="bird"))
    with pytest.raises(MissingFeatureError):
        pipe.embed(Image(np.zeros((4, 4, 3))))


def test_feature_file_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("x,1,2,3\n")
    with pytest.raises(ValueError, match="expected 128"):
        Pipeline(PipelineConfig(embedder="feature-file", feature_file=str(path)))


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(embedder="mobilenet")
    with pytest.raises(ValueError):
        PipelineConfig(defense="md5")
    with pytest.raises(ValueError):
        PipelineConfig(embedder="feature-file")


# -- hash_image -------------------------------------------------------------


@pytest.mark.parametrize("embedder", ["linear-surrogate", "tanh-surrogate"])
@pytest.mark.parametrize("defense", ["none", "sha-at-the-end"])
def test_hash_image_golden(embedder, defense):
    pipe = Pipeline(PipelineConfig(embedder=embedder, defense=defense))
    assert pipe(golden_image()).hex() == GOLDEN[f"synthetic_{embedder}_{defense}"]


def test_hash_image_deterministic_and_defense_changes_output(small_ds):
    img = small_ds.images[2]
    plain = Pipeline(PipelineConfig())
    sha = Pipeline(PipelineConfig(defense="sha-at-the-end"))
    assert plain(img) == plain(img) == Pipeline(PipelineConfig())(img)
    assert plain(img) != sha(img)
    assert sha(img) == sha_block(plain.perceptual_hash(img))
    # identical inputs still collide after the defense
    copy = Image(np.array(img.data))
    assert sha(copy) == sha(img)


def test_hash_identical_across_processes():
    code = (
        "from phlab.datasets import SyntheticSpec, generate_synthetic\n"
        "from phlab.pipeline import Pipeline, PipelineConfig\n"
        "img = generate_synthetic(SyntheticSpec(class_count=2, per_class=1, rng_seed=5)).images[1]\n"
        "print(Pipeline(PipelineConfig())(img).hex())\n"
    )
    runs = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout.strip() for _ in range(2)}
    assert runs == {GOLDEN["synthetic_tanh-surrogate_none"]}


# -- SHA stage --------------------------------------------------------------


def test_sha_block_zero_vector_against_oracle():
    h = BinaryHash(np.zeros(96, dtype=int))
    assert sha_block(h).to_bytes() == sha256(bytes(12))[:12]
    assert sha_block(h).hex() == GOLDEN["sha_block_zero"]
    assert sha_block(BinaryHash(np.ones(96, dtype=int))).hex() == GOLDEN["sha_block_ones"]


@given(bits96)
@settings(max_examples=50)
def test_sha_block_matches_oracle(h):
    assert sha_block(h).to_bytes() == sha256(h.to_bytes())[:12]
    assert sha_block(h) == sha_block(BinaryHash(h.bits.copy()))


def test_sha_block_avalanche():
    rng = np.random.default_rng(1)
    sims = []
    for _ in range(1000):
        bits = rng.integers(0, 2, 96)
        flipped = bits.copy()
        flipped[rng.integers(96)] ^= 1
        sims.append(hamming_similarity(sha_block(BinaryHash(bits)), sha_block(BinaryHash(flipped))))
    assert 0.45 <= np.mean(sims) <= 0.55


# -- statistical properties -------------------------------------------------


def test_linear_sweep_monotone(linear_pipe, small_ds):
    x1, x2 = small_ds.images[1], small_ds.images[20]
    h1 = linear_pipe(x1)
    sims = [hamming_similarity(linear_pipe(interpolate(x1, x2, a)), h1) for a in np.linspace(0, 1, 51)]
    assert np.all(np.diff(sims) >= 0)


@pytest.mark.parametrize("embedder", ["linear-surrogate", "tanh-surrogate"])
def test_uniform_hashing_on_noise(embedder):
    pipe = Pipeline(PipelineConfig(embedder=embedder))
    imgs = list(random_images(600, 32, 77))
    sims = np.array([hamming_similarity(pipe(imgs[2 * i]), pipe(imgs[2 * i + 1])) for i in range(300)])
    assert 0.47 <= sims.mean() <= 0.53
    assert abs(sims.std() - np.sqrt(0.25 / 96)) <= 0.25 * np.sqrt(0.25 / 96)
