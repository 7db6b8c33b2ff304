"""Music diversification: pitch shift, speed change, gradual volume change.

Audio transforms are paired with feature co-transforms so caption text and
machine-readable features stay consistent with the altered audio.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .audio import AudioClip
from .extract import BeatEvent, BeatGrid, ChordSequence, FeatureSet, KeyEstimate, TempoBPM

PV_WINDOW = 2048
PV_HOP = 512

CLIP_WINDOW_SECONDS = 10.0

PITCH_SHIFT_RANGE = (-3, 3)
STRETCH_RANGE = (0.75, 1.25)
STRETCH_MAGNITUDE = (0.05, 0.25)
G_MIN_RANGE = (0.1, 0.5)


@dataclass(frozen=True)
class PitchShift:
    k: int  # semitones, -3..3 excluding 0

    kind = "pitch_shift"


@dataclass(frozen=True)
class TimeStretch:
    factor: float  # >1 = faster; 0.75..1.25 excluding 1

    kind = "time_stretch"


@dataclass(frozen=True)
class VolumeRamp:
    direction: str  # "crescendo" | "decrescendo"
    g_min: float
    pivot_seconds: float

    kind = "volume_ramp"


Augmentation = PitchShift | TimeStretch | VolumeRamp


def augmentation_to_json_obj(aug: Augmentation) -> dict:
    if isinstance(aug, PitchShift):
        return {"kind": "pitch_shift", "k": aug.k}
    if isinstance(aug, TimeStretch):
        return {"kind": "time_stretch", "factor": aug.factor}
    return {
        "kind": "volume_ramp",
        "direction": aug.direction,
        "g_min": aug.g_min,
        "pivot_seconds": aug.pivot_seconds,
    }


def augmentation_from_json_obj(obj: dict) -> Augmentation:
    kind = obj["kind"]
    if kind == "pitch_shift":
        return PitchShift(int(obj["k"]))
    if kind == "time_stretch":
        return TimeStretch(float(obj["factor"]))
    if kind == "volume_ramp":
        return VolumeRamp(obj["direction"], float(obj["g_min"]), float(obj["pivot_seconds"]))
    raise ValueError(f"unknown augmentation kind {kind!r}")


# ---------------------------------------------------------------------------
# Phase vocoder


def _frame(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    n_frames = max(1, (len(x) - window) // hop + 1)
    pad = (n_frames - 1) * hop + window - len(x)
    if pad > 0:
        x = np.concatenate([x, np.zeros(pad)])
    idx = hop * np.arange(n_frames)[:, None] + np.arange(window)[None, :]
    return x[idx]


def _overlap_add(frames: np.ndarray, window: int, hop: int) -> np.ndarray:
    n_frames = frames.shape[0]
    w = np.hanning(window)
    out = np.zeros((n_frames - 1) * hop + window)
    norm = np.zeros_like(out)
    for t in range(n_frames):
        out[t * hop : t * hop + window] += frames[t] * w
        norm[t * hop : t * hop + window] += w**2
    # Edge samples with almost no window coverage would otherwise explode.
    floor = 0.01 * norm.max()
    return np.where(norm > floor, out / np.maximum(norm, floor), 0.0)


def phase_vocoder(x: np.ndarray, rate: float, *, window: int = PV_WINDOW, hop: int = PV_HOP) -> np.ndarray:
    """Time-stretch a signal by ``rate`` (>1 = faster) preserving pitch.

    Classic magnitude-interpolation vocoder with identity phase locking:
    per-bin phases accumulate measured instantaneous frequencies, and
    off-peak bins are re-locked each frame to their nearest spectral peak
    so vertical phase coherence survives the stretch.
    """
    if len(x) < window:
        x = np.concatenate([x, np.zeros(window - len(x))])
    w = np.hanning(window)
    frames = _frame(x, window, hop) * w
    spec = np.fft.rfft(frames, axis=1)
    n_frames, n_bins = spec.shape

    steps = np.arange(0.0, n_frames, rate)
    expected = 2.0 * np.pi * hop * np.arange(n_bins) / window

    spec_pad = np.vstack([spec, np.zeros((2, n_bins), dtype=complex)])
    mags = np.abs(spec_pad)
    phases = np.angle(spec_pad)

    out = np.zeros((len(steps), n_bins), dtype=complex)
    acc = phases[0].copy()
    for t, step in enumerate(steps):
        idx = int(step)
        frac = step - idx
        mag = (1.0 - frac) * mags[idx] + frac * mags[idx + 1]
        ana_phase = phases[idx]
        locked = _lock_phases(mag, acc, ana_phase)
        out[t] = mag * np.exp(1j * locked)
        # Advance accumulators by the measured per-hop phase increment.
        dphi = phases[idx + 1] - ana_phase - expected
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        acc += expected + dphi

    synth = np.fft.irfft(out, n=window, axis=1)
    return _overlap_add(synth, window, hop)


def _lock_phases(mag: np.ndarray, acc: np.ndarray, ana_phase: np.ndarray) -> np.ndarray:
    """Identity phase locking: each bin follows its region's peak."""
    n = len(mag)
    if n < 3:
        return acc
    peaks = np.flatnonzero(
        (mag[1:-1] >= mag[:-2]) & (mag[1:-1] >= mag[2:]) & (mag[1:-1] > 0)
    ) + 1
    if peaks.size == 0:
        return acc
    # Each bin belongs to its nearest peak (boundaries midway between peaks).
    owner = peaks[np.searchsorted((peaks[:-1] + peaks[1:]) / 2.0, np.arange(n))]
    return acc[owner] + (ana_phase - ana_phase[owner])


# ---------------------------------------------------------------------------
# Public transforms


def time_stretch(clip: AudioClip, factor: float) -> AudioClip:
    """Change speed by ``factor`` (>1 = faster) without changing pitch."""
    if not STRETCH_RANGE[0] <= factor <= STRETCH_RANGE[1] or factor == 1.0:
        raise ValueError(f"stretch factor must be in [{STRETCH_RANGE[0]}, {STRETCH_RANGE[1]}] and != 1")
    return _stretch_to_length(clip, factor, round(len(clip.samples) / factor))


def _stretch_to_length(clip: AudioClip, rate: float, target_len: int) -> AudioClip:
    out = phase_vocoder(clip.samples, rate)
    if len(out) >= target_len:
        out = out[:target_len]
    else:
        out = np.concatenate([out, np.zeros(target_len - len(out))])
    return AudioClip(out, clip.sample_rate)


def pitch_shift(clip: AudioClip, k: int) -> AudioClip:
    """Shift all frequencies by ``k`` semitones, preserving duration.

    Resampling by 2^(-k/12) moves the spectrum; a phase-vocoder stretch
    restores the original duration.
    """
    if k == 0 or not PITCH_SHIFT_RANGE[0] <= k <= PITCH_SHIFT_RANGE[1]:
        raise ValueError("pitch shift must be a nonzero integer in -3..3")
    ratio = Fraction(2.0 ** (-k / 12.0)).limit_denominator(1000)
    shifted = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    rate = len(shifted) / len(clip.samples)
    return _stretch_to_length(AudioClip(shifted, clip.sample_rate), rate, len(clip.samples))


def volume_ramp(clip: AudioClip, direction: str, g_min: float, pivot_seconds: float) -> AudioClip:
    """Apply a linear crescendo/decrescendo; the maximum gain stays at 1.

    Crescendo ramps from ``g_min`` at t=0 to 1 at the pivot, then holds 1;
    decrescendo holds 1 until the pivot, then ramps to ``g_min`` at the end.
    """
    if direction not in ("crescendo", "decrescendo"):
        raise ValueError("direction must be 'crescendo' or 'decrescendo'")
    if not G_MIN_RANGE[0] <= g_min <= G_MIN_RANGE[1]:
        raise ValueError(f"g_min must be in [{G_MIN_RANGE[0]}, {G_MIN_RANGE[1]}]")
    duration = clip.duration
    if direction == "crescendo":
        if not 0 < pivot_seconds <= duration:
            raise ValueError("crescendo pivot must be in (0, duration]")
    else:
        if not 0 < pivot_seconds < duration:
            raise ValueError("decrescendo pivot must be in (0, duration)")
    t = np.arange(len(clip.samples)) / clip.sample_rate
    if direction == "crescendo":
        gain = np.where(
            t < pivot_seconds,
            g_min + (1.0 - g_min) * t / pivot_seconds,
            1.0,
        )
    else:
        tail = max(duration - pivot_seconds, 1e-12)
        gain = np.where(
            t < pivot_seconds,
            1.0,
            1.0 + (g_min - 1.0) * (t - pivot_seconds) / tail,
        )
    return AudioClip(clip.samples * gain, clip.sample_rate)


def apply_augmentation(clip: AudioClip, aug: Augmentation) -> AudioClip:
    if isinstance(aug, PitchShift):
        return pitch_shift(clip, aug.k)
    if isinstance(aug, TimeStretch):
        return time_stretch(clip, aug.factor)
    return volume_ramp(clip, aug.direction, aug.g_min, aug.pivot_seconds)


# ---------------------------------------------------------------------------
# Feature co-transforms


def co_transform_features(
    features: FeatureSet, aug: Augmentation, *, window_seconds: float = CLIP_WINDOW_SECONDS
) -> FeatureSet:
    """Transform extracted features in tandem with the audio transform.

    Pitch shift rotates chord/key roots; time stretch rescales event times
    and tempo, dropping events pushed past the fixed clip window; a volume
    ramp leaves the four features untouched.
    """
    if isinstance(aug, PitchShift):
        chords = features.chords
        if chords is not None:
            chords = ChordSequence(
                tuple(replace(e, root=(e.root + aug.k) % 12) for e in chords.entries)
            )
        key = features.key
        if key is not None:
            key = KeyEstimate((key.root + aug.k) % 12, key.mode)
        return replace(features, chords=chords, key=key)
    if isinstance(aug, TimeStretch):
        f = aug.factor
        beats = features.beats
        if beats is not None:
            kept = [
                replace(e, time_seconds=e.time_seconds / f)
                for e in beats.entries
                if e.time_seconds / f <= window_seconds
            ]
            beats = BeatGrid(tuple(kept))
        chords = features.chords
        if chords is not None:
            chords = ChordSequence(
                tuple(
                    replace(e, time_seconds=e.time_seconds / f)
                    for e in chords.entries
                    if e.time_seconds / f <= window_seconds
                )
            )
        tempo = features.tempo
        if tempo is not None:
            tempo = TempoBPM(tempo.bpm * f)
        return replace(features, beats=beats, chords=chords, tempo=tempo)
    return features


# ---------------------------------------------------------------------------
# Dataset-build plan: 11 variants per source clip


def plan_augmentations(rng: np.random.Generator, duration_seconds: float) -> list[Augmentation]:
    """The per-clip plan: all 6 nonzero semitone shifts, 4 speed changes
    drawn uniformly from +/-(5..25)%, and one volume ramp."""
    plan: list[Augmentation] = [PitchShift(k) for k in (-3, -2, -1, 1, 2, 3)]
    for _ in range(4):
        magnitude = rng.uniform(*STRETCH_MAGNITUDE)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        plan.append(TimeStretch(float(1.0 + sign * magnitude)))
    direction = "crescendo" if rng.random() < 0.5 else "decrescendo"
    g_min = float(rng.uniform(*G_MIN_RANGE))
    if direction == "crescendo":
        pivot = duration_seconds
    else:
        pivot = float(rng.uniform(0.2, 0.8) * duration_seconds)
    plan.append(VolumeRamp(direction, g_min, pivot))
    return plan
