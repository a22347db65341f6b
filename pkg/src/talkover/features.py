"""Feature tensors for the classifier: MFCC, magnitude spectrogram, and
precomputed self-supervised embeddings loaded from SIE1 files.

Every extractor consumes only the last 5 seconds (80000 samples) of a
clip's two channels and stacks the per-channel feature blocks along the
feature axis: rows [0, d) come from the left channel, rows [d, 2d) from
the right. Window and hop sizes are fixed so 5 s of 16 kHz audio yields
exactly 401 MFCC frames and 313 spectrogram frames.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .audio import SAMPLE_RATE
from .errors import EmbeddingFormatError, ShapeContractError

ANALYSIS_WINDOW_S = 5.0
ANALYSIS_SAMPLES = int(ANALYSIS_WINDOW_S * SAMPLE_RATE)

MFCC_N_FFT = 400
MFCC_HOP = 200
MFCC_N_COEFF = 40
MFCC_FRAMES = ANALYSIS_SAMPLES // MFCC_HOP + 1  # 401

SPEC_N_FFT = 512
SPEC_HOP = 256
SPEC_BINS = SPEC_N_FFT // 2 + 1  # 257
SPEC_FRAMES = ANALYSIS_SAMPLES // SPEC_HOP + 1  # 313

_LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class EmbeddingProfile:
    """Shape contract for one family of SSL embedding files."""

    name: str
    layers: int
    dim: int
    frames: int = 249  # 5 s at 20 ms frame shift
    channels: int = 2

    @property
    def stacked_dim(self) -> int:
        return self.channels * self.dim


# base/large mirror the published encoder sizes; tiny is the synthetic
# profile used by the fixture corpus so desk-scale runs stay small.
PROFILES = {
    "base": EmbeddingProfile("base", layers=13, dim=768),
    "large": EmbeddingProfile("large", layers=25, dim=1024),
    "tiny": EmbeddingProfile("tiny", layers=5, dim=32),
}


@dataclass(frozen=True)
class LayeredEmbedding:
    """Per-layer embeddings for one clip: data[channel, layer, dim, frame]."""

    data: np.ndarray
    profile: EmbeddingProfile

    def __post_init__(self):
        p = self.profile
        expected = (p.channels, p.layers, p.dim, p.frames)
        if self.data.shape != expected:
            raise ShapeContractError(
                "embedding shape %s does not match profile %s %s"
                % (self.data.shape, p.name, expected)
            )
        if not np.all(np.isfinite(self.data)):
            raise EmbeddingFormatError("embedding contains non-finite values")


def _frame(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Centered framing with zero padding; returns (n_frames, n_fft)."""
    pad = n_fft // 2
    padded = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    n_frames = len(x) // hop + 1
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def _hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int = SAMPLE_RATE,
                   f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """Triangular mel filters as a (n_mels, n_fft // 2 + 1) matrix."""
    if f_max is None:
        f_max = sample_rate / 2.0

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    mel_points = np.linspace(to_mel(f_min), to_mel(f_max), n_mels + 2)
    hz_points = from_mel(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    fb = np.zeros((n_mels, len(bin_freqs)))
    for m in range(n_mels):
        left, center, right = hz_points[m: m + 3]
        up = (bin_freqs - left) / (center - left)
        down = (right - bin_freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


_MEL_FB = mel_filterbank(MFCC_N_COEFF, MFCC_N_FFT)
_MFCC_WINDOW = _hann(MFCC_N_FFT)
_SPEC_WINDOW = _hann(SPEC_N_FFT)


def _tail(clip_channel) -> np.ndarray:
    samples = clip_channel.samples
    if len(samples) < ANALYSIS_SAMPLES:
        raise ShapeContractError(
            "channel holds %d samples, need at least %d" % (len(samples), ANALYSIS_SAMPLES)
        )
    return samples[-ANALYSIS_SAMPLES:]


def _mfcc_mono(x: np.ndarray) -> np.ndarray:
    frames = _frame(x, MFCC_N_FFT, MFCC_HOP) * _MFCC_WINDOW
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    mel = power @ _MEL_FB.T
    logmel = np.log(mel + _LOG_FLOOR)
    return dct(logmel, type=2, norm="ortho", axis=1).T  # (n_coeff, n_frames)


def _spectrogram_mono(x: np.ndarray) -> np.ndarray:
    frames = _frame(x, SPEC_N_FFT, SPEC_HOP) * _SPEC_WINDOW
    return np.abs(np.fft.rfft(frames, axis=1)).T  # (bins, n_frames)


def mfcc(clip) -> np.ndarray:
    """40 MFCCs per channel over the clip's last 5 s; shape (80, 401).

    Window 400 samples, hop 200, centered zero padding, 40-filter mel
    bank over 0-8 kHz, orthonormal DCT-II with c0 kept.
    """
    out = np.concatenate([_mfcc_mono(_tail(clip.left)), _mfcc_mono(_tail(clip.right))])
    assert out.shape == (2 * MFCC_N_COEFF, MFCC_FRAMES)
    return out


def spectrogram(clip) -> np.ndarray:
    """Magnitude STFT per channel over the last 5 s; shape (514, 313).

    FFT size 512 (257 bins), hop 256, centered zero padding.
    """
    out = np.concatenate([_spectrogram_mono(_tail(clip.left)), _spectrogram_mono(_tail(clip.right))])
    assert out.shape == (2 * SPEC_BINS, SPEC_FRAMES)
    return out


_SIE1_MAGIC = b"SIE1"
_SIE1_VERSION = 1


def write_embeddings(path, emb: LayeredEmbedding) -> None:
    """Serialize an embedding to the SIE1 container.

    Layout: magic "SIE1", u32 version, u32 layers, u32 dim, u32 frames,
    u32 channels, then float32 values in channel-major order (channel,
    layer, feature row, frame), all little-endian.
    """
    p = emb.profile
    header = _SIE1_MAGIC + struct.pack("<5I", _SIE1_VERSION, p.layers, p.dim, p.frames, p.channels)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(emb.data, dtype="<f4").tobytes())


def load_embeddings(path, expected: EmbeddingProfile) -> LayeredEmbedding:
    """Read and validate a SIE1 file against an expected profile."""
    with open(path, "rb") as fh:
        header = fh.read(24)
        if len(header) < 24 or header[:4] != _SIE1_MAGIC:
            raise EmbeddingFormatError("%s: bad magic, not a SIE1 file" % path)
        version, layers, dim, frames, channels = struct.unpack("<5I", header[4:])
        if version != _SIE1_VERSION:
            raise EmbeddingFormatError("%s: unsupported version %d" % (path, version))
        declared = (channels, layers, dim, frames)
        contract = (expected.channels, expected.layers, expected.dim, expected.frames)
        if declared != contract:
            raise ShapeContractError(
                "%s: file declares (C, L, d, M)=%s, profile %r requires %s"
                % (path, declared, expected.name, contract)
            )
        count = channels * layers * dim * frames
        raw = fh.read(4 * count)
        if len(raw) != 4 * count:
            raise EmbeddingFormatError("%s: truncated payload" % path)
        data = np.frombuffer(raw, dtype="<f4").reshape(declared)
    if not np.all(np.isfinite(data)):
        raise EmbeddingFormatError("%s: non-finite values" % path)
    return LayeredEmbedding(data, expected)
