"""Deterministic audio I/O and spectral primitives.

Everything downstream (feature extraction, augmentation) works on mono
float clips. The canonical pipeline format is 16 kHz mono 16-bit PCM WAV;
extractors resample internally, so clips at other rates are accepted.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioFormatError

PIPELINE_RATE = 16_000
MIN_SAMPLE_RATE = 8_000

STFT_WINDOW = 1024
STFT_HOP = 256

# Chroma folding ignores bins below A1 to avoid low-frequency smear.
CHROMA_MIN_HZ = 55.0


@dataclass(frozen=True)
class AudioClip:
    """Mono PCM samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be a 1-D array")
        if self.sample_rate < MIN_SAMPLE_RATE:
            raise ValueError(f"sample_rate must be >= {MIN_SAMPLE_RATE} Hz")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude spectrogram; frame t covers time [t*hop, t*hop + window)."""

    frames: np.ndarray  # [n_frames, n_bins], non-negative
    hop_seconds: float
    bin_hz: np.ndarray
    window_seconds: float

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class Chromagram:
    """Per-frame energy folded into the 12 pitch classes (0=C .. 11=B)."""

    frames: np.ndarray  # [n_frames, 12]
    hop_seconds: float


def read_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (PCM16 or float32, 1-2 channels) as a mono clip."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, struct.error) as exc:
        raise AudioFormatError(f"malformed WAV file {path}: {exc}") from exc
    if data.size == 0:
        raise AudioFormatError(f"zero-length audio in {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"unsupported sample format {data.dtype} in {path}")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioFormatError(f"{path} has {samples.shape[1]} channels; at most 2 supported")
        samples = samples.mean(axis=1)
    return AudioClip(samples, int(rate))


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip as 16-bit PCM. Samples outside [-1, 1] are clipped with a warning."""
    if len(clip.samples) == 0:
        raise ValueError("cannot write an empty clip")
    samples = clip.samples
    peak = np.max(np.abs(samples))
    if peak > 1.0:
        warnings.warn(f"samples exceed [-1, 1] (peak {peak:.4f}); clipping", stacklevel=2)
        samples = np.clip(samples, -1.0, 1.0)
    # Symmetric 32768 scaling keeps the round-trip error within 2^-15.
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, clip.sample_rate, pcm)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resampling; duration is preserved within one output sample."""
    if target_rate < MIN_SAMPLE_RATE:
        raise ValueError(f"target_rate must be >= {MIN_SAMPLE_RATE} Hz")
    if target_rate == clip.sample_rate:
        return clip
    ratio = Fraction(target_rate, clip.sample_rate)
    out = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    return AudioClip(out, target_rate)


def stft(clip: AudioClip, window_samples: int = STFT_WINDOW, hop_samples: int = STFT_HOP) -> Spectrogram:
    """Hann-windowed magnitude STFT with n_frames = floor((len - window)/hop) + 1."""
    if window_samples < 2 or window_samples & (window_samples - 1):
        raise ValueError("window_samples must be a power of two")
    if not 0 < hop_samples <= window_samples:
        raise ValueError("hop_samples must be in (0, window_samples]")
    n = len(clip.samples)
    if n < window_samples:
        raise ValueError("clip shorter than one analysis window")
    n_frames = (n - window_samples) // hop_samples + 1
    offsets = hop_samples * np.arange(n_frames)[:, None] + np.arange(window_samples)[None, :]
    segments = clip.samples[offsets] * np.hanning(window_samples)
    frames = np.abs(np.fft.rfft(segments, axis=1))
    bin_hz = np.fft.rfftfreq(window_samples, d=1.0 / clip.sample_rate)
    return Spectrogram(
        frames=frames,
        hop_seconds=hop_samples / clip.sample_rate,
        bin_hz=bin_hz,
        window_seconds=window_samples / clip.sample_rate,
    )


def onset_envelope(spec: Spectrogram) -> np.ndarray:
    """Per-frame onset strength.

    Half-wave-rectified spectral flux, mean-subtracted over a local window
    (~0.5 s) and clamped at zero. Length equals the spectrogram frame count.
    """
    mags = spec.frames
    flux = np.zeros(spec.n_frames)
    if spec.n_frames > 1:
        diff = np.diff(mags, axis=0)
        flux[1:] = np.clip(diff, 0.0, None).sum(axis=1)
    win = max(3, int(round(0.5 / spec.hop_seconds)) | 1)
    if spec.n_frames >= 2:
        local_mean = np.convolve(flux, np.ones(win) / win, mode="same")
        flux = np.clip(flux - local_mean, 0.0, None)
    return flux


def chroma(spec: Spectrogram, *, min_hz: float = CHROMA_MIN_HZ, max_hz: float | None = None) -> Chromagram:
    """Fold STFT magnitudes into pitch classes.

    Each bin at frequency f >= min_hz maps to class
    (round(12*log2(f / 440)) + 9) mod 12; magnitudes accumulate per class.
    ``max_hz`` restricts the fold to a band (used for bass-register chroma).
    """
    mask = spec.bin_hz >= min_hz
    if max_hz is not None:
        mask &= spec.bin_hz < max_hz
    freqs = spec.bin_hz[mask]
    out = np.zeros((spec.n_frames, 12))
    if freqs.size:
        classes = (np.round(12.0 * np.log2(freqs / 440.0)).astype(int) + 9) % 12
        fold = np.zeros((freqs.size, 12))
        fold[np.arange(freqs.size), classes] = 1.0
        out = spec.frames[:, mask] @ fold
    return Chromagram(frames=out, hop_seconds=spec.hop_seconds)
