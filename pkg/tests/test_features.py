from types import SimpleNamespace

import numpy as np
import pytest

from talkover.audio import AudioChannel, SAMPLE_RATE
from talkover.errors import EmbeddingFormatError, ShapeContractError
from talkover.features import (ANALYSIS_SAMPLES, MFCC_FRAMES, MFCC_HOP,
                               MFCC_N_COEFF, PROFILES, SPEC_BINS, SPEC_FRAMES,
                               SPEC_HOP, SPEC_N_FFT, EmbeddingProfile,
                               LayeredEmbedding, load_embeddings,
                               mel_filterbank, mfcc, spectrogram,
                               write_embeddings)
from talkover.overlap import CandidateClip


def make_clip(seed=0, left=None, right=None):
    rng = np.random.default_rng(seed)
    n = 160000
    if left is None:
        left = rng.uniform(-0.5, 0.5, n)
    if right is None:
        right = rng.uniform(-0.5, 0.5, n)
    return CandidateClip("c", "m", "b", 25.0,
                         AudioChannel(left, SAMPLE_RATE, "l"),
                         AudioChannel(right, SAMPLE_RATE, "r"))


def test_frame_count_arithmetic():
    assert ANALYSIS_SAMPLES == 80000
    assert ANALYSIS_SAMPLES // MFCC_HOP + 1 == 401 == MFCC_FRAMES
    assert ANALYSIS_SAMPLES // SPEC_HOP + 1 == 313 == SPEC_FRAMES
    assert SPEC_BINS == 257


def test_mfcc_shape():
    assert mfcc(make_clip()).shape == (2 * MFCC_N_COEFF, MFCC_FRAMES)


def test_spectrogram_shape_and_sign():
    out = spectrogram(make_clip())
    assert out.shape == (2 * SPEC_BINS, SPEC_FRAMES)
    assert np.all(out >= 0.0)


def test_features_are_deterministic():
    clip = make_clip(3)
    assert np.array_equal(mfcc(clip), mfcc(clip))
    assert np.array_equal(spectrogram(clip), spectrogram(clip))


def test_features_use_only_last_five_seconds():
    rng = np.random.default_rng(4)
    tail_l = rng.uniform(-0.5, 0.5, 80000)
    tail_r = rng.uniform(-0.5, 0.5, 80000)

    def with_head(head_seed):
        head = np.random.default_rng(head_seed).uniform(-0.5, 0.5, 80000)
        return make_clip(left=np.concatenate([head, tail_l]),
                         right=np.concatenate([head[::-1], tail_r]))

    a, b = with_head(10), with_head(11)
    assert np.array_equal(mfcc(a), mfcc(b))
    assert np.array_equal(spectrogram(a), spectrogram(b))


def test_short_channel_rejected():
    short = SimpleNamespace(
        left=AudioChannel(np.zeros(1000), SAMPLE_RATE, "l"),
        right=AudioChannel(np.zeros(1000), SAMPLE_RATE, "r"))
    with pytest.raises(ShapeContractError):
        mfcc(short)


def test_pure_tone_lands_in_its_fft_bin():
    t = np.arange(160000) / SAMPLE_RATE
    tone = 0.4 * np.sin(2 * np.pi * 1000.0 * t)
    clip = make_clip(left=np.zeros(160000), right=tone)
    out = spectrogram(clip)
    right = out[SPEC_BINS:]
    # skip boundary frames where the centered window hangs over the edge
    interior = right[:, 2:-2]
    peak_bins = np.argmax(interior, axis=0)
    expected = 1000.0 * SPEC_N_FFT / SAMPLE_RATE  # analytic bin 32
    assert np.all(np.abs(peak_bins - expected) <= 1)
    # the silent left half carries nothing
    assert np.allclose(out[:SPEC_BINS], 0.0, atol=1e-12)


def test_mel_filterbank_geometry():
    fb = mel_filterbank(40, 400)
    assert fb.shape == (40, 201)
    assert np.all(fb >= 0.0)
    assert np.all(fb <= 1.0)
    # filter centers ascend in frequency
    centers = np.argmax(fb, axis=1)
    assert np.all(np.diff(centers) >= 0)
    # mid-band bins are covered by at least one filter
    coverage = fb.sum(axis=0)
    assert np.all(coverage[5:195] > 0.0)


def test_profile_dimensions():
    assert PROFILES["base"].layers == 13
    assert PROFILES["base"].stacked_dim == 2 * 768
    assert PROFILES["large"].layers == 25
    assert PROFILES["large"].stacked_dim == 2 * 1024
    for p in PROFILES.values():
        assert p.frames == 249
        assert p.channels == 2


def tiny_embedding(seed=0):
    profile = PROFILES["tiny"]
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(profile.channels, profile.layers, profile.dim,
                            profile.frames)).astype(np.float32)
    return LayeredEmbedding(data, profile)


def test_embedding_shape_contract():
    profile = PROFILES["tiny"]
    with pytest.raises(ShapeContractError):
        LayeredEmbedding(np.zeros((2, 5, 32, 100), dtype=np.float32), profile)


def test_embedding_rejects_non_finite():
    profile = PROFILES["tiny"]
    data = np.zeros((2, 5, 32, 249), dtype=np.float32)
    data[0, 0, 0, 0] = np.nan
    with pytest.raises(EmbeddingFormatError):
        LayeredEmbedding(data, profile)


def test_embedding_file_round_trip(tmp_path):
    emb = tiny_embedding()
    path = tmp_path / "clip.sie"
    write_embeddings(path, emb)
    back = load_embeddings(path, PROFILES["tiny"])
    assert np.array_equal(back.data, emb.data)
    assert back.profile == PROFILES["tiny"]


def test_embedding_file_rejects_wrong_profile(tmp_path):
    emb = tiny_embedding()
    path = tmp_path / "clip.sie"
    write_embeddings(path, emb)
    with pytest.raises((ShapeContractError, EmbeddingFormatError)):
        load_embeddings(path, PROFILES["base"])


def test_embedding_file_rejects_bad_magic(tmp_path):
    emb = tiny_embedding()
    path = tmp_path / "clip.sie"
    write_embeddings(path, emb)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(path, PROFILES["tiny"])


def test_embedding_file_rejects_truncation(tmp_path):
    emb = tiny_embedding()
    path = tmp_path / "clip.sie"
    write_embeddings(path, emb)
    blob = path.read_bytes()
    path.write_bytes(blob[:-100])
    with pytest.raises(EmbeddingFormatError):
        load_embeddings(path, PROFILES["tiny"])


def test_custom_profile_round_trip(tmp_path):
    profile = EmbeddingProfile("fd", layers=3, dim=4, frames=6, channels=2)
    rng = np.random.default_rng(9)
    emb = LayeredEmbedding(
        rng.normal(size=(2, 3, 4, 6)).astype(np.float32), profile)
    path = tmp_path / "clip.sie"
    write_embeddings(path, emb)
    back = load_embeddings(path, profile)
    assert np.array_equal(back.data, emb.data)
