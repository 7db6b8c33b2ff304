"""Shared synthesized-audio fixtures for the test suite."""

import numpy as np
import pytest

from musekit.audio import AudioClip

SR = 16000

MAJOR_STEPS = (0, 2, 4, 5, 7, 9, 11, 12)
HARMONIC_MINOR_STEPS = (0, 2, 3, 5, 7, 8, 11, 12)


def sine_mix(freqs, duration, sr=SR, amps=None, peak=0.8):
    """Sum of sines, peak-normalized."""
    t = np.arange(int(duration * sr)) / sr
    out = np.zeros_like(t)
    for i, f in enumerate(freqs):
        a = amps[i] if amps is not None else 1.0
        out += a * np.sin(2 * np.pi * f * t)
    return out / (np.max(np.abs(out)) + 1e-12) * peak


def sine_clip(freq, duration, sr=SR, peak=0.5):
    return AudioClip(sine_mix([freq], duration, sr=sr, peak=peak), sr)


def click_train(spacing, accent_every=None, duration=10.0, sr=SR, accent_gain=0.4):
    """Short 1 kHz bursts every ``spacing`` seconds, optionally accented."""
    n = int(duration * sr)
    x = np.zeros(n)
    t, i = 0.0, 0
    length = int(0.01 * sr)
    burst = np.sin(2 * np.pi * 1000 * np.arange(length) / sr) * np.hanning(length)
    while t < duration - 0.05:
        amp = 1.0 if not accent_every or i % accent_every == 0 else accent_gain
        idx = int(t * sr)
        x[idx : idx + length] += amp * burst
        t += spacing
        i += 1
    return AudioClip(x, sr)


def scale_clip(root_pc, steps=MAJOR_STEPS, note_seconds=0.4, base_hz=261.63, sr=SR):
    """An ascending scale of pure tones starting at the given pitch class."""
    base = base_hz * 2.0 ** (root_pc / 12.0)
    notes = [sine_mix([base * 2.0 ** (s / 12.0)], note_seconds, sr=sr) for s in steps]
    return AudioClip(np.concatenate(notes), sr)


def triad_clip(freq_lists, seconds_each, sr=SR):
    """Concatenated chord blocks, one per frequency list."""
    blocks = [sine_mix(freqs, seconds_each, sr=sr) for freqs in freq_lists]
    return AudioClip(np.concatenate(blocks), sr)


def music_clip(seed=0, duration=10.0, sr=SR):
    """Clicks over a C-major triad: all four extractors succeed on this."""
    rng = np.random.default_rng(seed)
    n = int(duration * sr)
    t = np.arange(n) / sr
    x = np.zeros(n)
    detune = 2.0 ** (rng.integers(-2, 3) / 12.0)
    for f in (261.63, 329.63, 392.0):
        x += 0.25 * np.sin(2 * np.pi * f * detune * t)
    spacing = float(rng.choice([0.4, 0.5, 0.6]))
    tt, i = 0.0, 0
    length = int(0.01 * sr)
    burst = np.sin(2 * np.pi * 1500 * np.arange(length) / sr) * np.hanning(length)
    while tt < duration - 0.05:
        amp = 1.0 if i % 2 == 0 else 0.5
        idx = int(tt * sr)
        x[idx : idx + length] += 0.6 * amp * burst
        tt += spacing
        i += 1
    return AudioClip(x / np.max(np.abs(x)) * 0.8, sr)


def dominant_frequency(clip: AudioClip) -> float:
    spec = np.abs(np.fft.rfft(clip.samples * np.hanning(len(clip.samples))))
    freqs = np.fft.rfftfreq(len(clip.samples), 1.0 / clip.sample_rate)
    return float(freqs[np.argmax(spec)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
