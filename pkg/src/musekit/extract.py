"""Music feature extraction: beats/downbeats, tempo, chords, and key.

These are classic desk-scale algorithms (dynamic-programming beat tracking,
template chord matching with best-path smoothing, Krumhansl-Schmuckler key
finding) standing in for heavyweight external extractors. No parity with
any particular tool is claimed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import notation
from .audio import (
    AudioClip,
    Chromagram,
    PIPELINE_RATE,
    chroma,
    onset_envelope,
    resample,
    stft,
)
from .errors import NoBeatsError, NoKeyError

TEMPO_MIN_BPM = 40.0
TEMPO_MAX_BPM = 210.0

# Best-path smoothing for chord labels.
SELF_TRANSITION_BONUS = 0.1
MIN_CHORD_RUN_SECONDS = 0.3
BASS_MAX_HZ = 200.0

# Harmony analysis needs finer frequency resolution than beat analysis:
# at 16 kHz a 1024-sample window cannot separate semitones below ~270 Hz.
HARMONY_WINDOW = 4096
HARMONY_HOP = 1024

# Krumhansl-Kessler key profiles, index 0 = tonic.
KRUMHANSL_MAJOR = np.array(
    [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88]
)
KRUMHANSL_MINOR = np.array(
    [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17]
)


@dataclass(frozen=True)
class BeatEvent:
    beat_type: int  # position in the measure, 1..meter
    time_seconds: float


@dataclass(frozen=True)
class BeatGrid:
    """Beat events with meter positions; times strictly increasing."""

    entries: tuple[BeatEvent, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        times = [e.time_seconds for e in entries]
        if any(b >= a for a, b in zip(times[1:], times[:-1])):
            raise ValueError("beat times must be strictly increasing")
        if any(not 1 <= e.beat_type <= 4 for e in entries):
            raise ValueError("beat types must be in 1..4")
        object.__setattr__(self, "entries", entries)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.time_seconds for e in self.entries])

    @property
    def meter(self) -> int:
        """Beats per measure, read off as the largest beat type present."""
        if not self.entries:
            raise ValueError("empty beat grid has no meter")
        return max(e.beat_type for e in self.entries)


@dataclass(frozen=True)
class ChordEvent:
    root: int  # pitch class 0..11
    ctype: str  # one of notation.CHORD_TYPES
    inverted: bool
    time_seconds: float

    def __post_init__(self):
        if not 0 <= self.root < 12:
            raise ValueError("chord root must be a pitch class 0..11")
        if self.ctype not in notation.CHORD_INTERVALS:
            raise ValueError(f"unknown chord type {self.ctype!r}")


@dataclass(frozen=True)
class ChordSequence:
    entries: tuple[ChordEvent, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        times = [e.time_seconds for e in entries]
        if any(b >= a for a, b in zip(times[1:], times[:-1])):
            raise ValueError("chord times must be strictly increasing")
        object.__setattr__(self, "entries", entries)

    def tokens(self) -> list[tuple[int, str]]:
        """(root, ctype) pairs, the currency of the chord metrics."""
        return [(e.root, e.ctype) for e in self.entries]


@dataclass(frozen=True)
class KeyEstimate:
    root: int  # pitch class 0..11
    mode: str  # "major" | "minor"

    def __post_init__(self):
        if self.mode not in ("major", "minor"):
            raise ValueError("mode must be 'major' or 'minor'")


@dataclass(frozen=True)
class TempoBPM:
    bpm: float

    def __post_init__(self):
        if not 0 < self.bpm < 1000:
            raise ValueError("bpm must be in (0, 1000)")


@dataclass(frozen=True)
class FeatureSet:
    """The four extracted features for one clip; any may be absent."""

    beats: BeatGrid | None = None
    chords: ChordSequence | None = None
    key: KeyEstimate | None = None
    tempo: TempoBPM | None = None


def extract_features(clip: AudioClip) -> FeatureSet:
    """Run all four extractors, leaving a feature absent when it fails."""
    beats = tempo = key = None
    try:
        beats = track_beats(clip)
        tempo = estimate_tempo(beats)
    except (NoBeatsError, ValueError):
        pass
    chords = recognize_chords(clip)
    try:
        key = estimate_key(clip)
    except NoKeyError:
        pass
    return FeatureSet(beats=beats, chords=chords, key=key, tempo=tempo)


# ---------------------------------------------------------------------------
# Beats and tempo


def track_beats(clip: AudioClip) -> BeatGrid:
    """Dynamic-programming beat tracker with accent-based meter estimation.

    The onset envelope supplies a tempo prior via its autocorrelation peak
    in 40-210 BPM; beats are the best-scoring comb through the envelope.
    The meter in {2, 3, 4} maximises the spread of per-phase mean accents
    over beat-synchronous onset strengths, and beat types cycle 1..meter
    starting at the strongest accent phase.
    """
    if clip.duration < 2.0:
        raise ValueError("beat tracking needs at least 2 s of audio")
    work = resample(clip, PIPELINE_RATE)
    spec = stft(work)
    env = onset_envelope(spec)
    if env.max() <= 1e-12:
        raise NoBeatsError("flat onset envelope: no detectable periodicity")
    fps = 1.0 / spec.hop_seconds
    period = _tempo_period_frames(env, fps)
    beat_frames = _dp_beats(env, period)
    if len(beat_frames) < 2:
        raise NoBeatsError("fewer than two beats found")
    times = beat_frames * spec.hop_seconds + spec.window_seconds / 2.0
    # Accent strength from a small neighborhood, tolerant of +-1 frame jitter.
    accents = np.array(
        [env[max(0, f - 2) : f + 3].max() for f in beat_frames]
    )
    meter, phase = _estimate_meter(accents)
    types = ((np.arange(len(beat_frames)) - phase) % meter) + 1
    entries = tuple(
        BeatEvent(int(t), float(time)) for t, time in zip(types, times)
    )
    return BeatGrid(entries)


def estimate_tempo(grid: BeatGrid) -> TempoBPM:
    """Tempo as the mean of 60/dt over consecutive beat pairs."""
    times = grid.times
    if len(times) < 2:
        raise ValueError("tempo estimation needs at least 2 beats")
    return TempoBPM(float(np.mean(60.0 / np.diff(times))))


def _tempo_period_frames(env: np.ndarray, fps: float, start_bpm: float = 120.0) -> float:
    """Autocorrelation peak of the envelope, restricted to 40-210 BPM.

    A log-normal weight centered on ``start_bpm`` (one octave wide) breaks
    the usual octave ambiguity between a pulse and its accent period.
    """
    ac = np.correlate(env, env, mode="full")[len(env) - 1:]
    lo = max(1, int(np.floor(fps * 60.0 / TEMPO_MAX_BPM)))
    hi = min(len(ac) - 1, int(np.ceil(fps * 60.0 / TEMPO_MIN_BPM)))
    if hi <= lo:
        raise NoBeatsError("clip too short for tempo autocorrelation")
    lags = np.arange(lo, hi + 1)
    bpms = fps * 60.0 / lags
    weight = np.exp(-0.5 * np.log2(bpms / start_bpm) ** 2)
    scores = ac[lo : hi + 1] * weight
    lag = lags[int(np.argmax(scores))]
    if ac[lag] <= 0:
        raise NoBeatsError("no periodicity in onset envelope")
    return float(lag)


def _dp_beats(env: np.ndarray, period: float, tightness: float = 100.0) -> np.ndarray:
    """Ellis-style dynamic program: comb through the envelope near the period."""
    # Local score: envelope smoothed by a gaussian about one beat wide.
    half = int(round(period))
    t = np.arange(-half, half + 1)
    window = np.exp(-0.5 * (t * 32.0 / period) ** 2)
    localscore = np.convolve(env / (env.std() + 1e-12), window, mode="same")

    n = len(localscore)
    backlink = np.full(n, -1, dtype=int)
    cumscore = np.zeros(n)
    score_thresh = 0.01 * localscore.max()
    first_beat = True
    for i in range(n):
        best_score = -np.inf
        best_loc = -1
        lo = max(0, i - int(round(2 * period)))
        hi = i - int(round(period / 2))
        for loc in range(lo, max(hi, 0)):
            score = cumscore[loc] - tightness * np.log(max(i - loc, 1) / period) ** 2
            if score > best_score:
                best_score = score
                best_loc = loc
        cumscore[i] = localscore[i] + (best_score if best_loc >= 0 else 0.0)
        if first_beat and localscore[i] < score_thresh:
            backlink[i] = -1
        else:
            backlink[i] = best_loc
            first_beat = False

    # Backtrace from the strongest plausible final beat.
    maxes = _local_maxima(cumscore)
    if not maxes.size:
        return np.array([], dtype=int)
    med = np.median(cumscore[maxes])
    candidates = maxes[cumscore[maxes] >= 0.5 * med]
    tail = int(candidates[-1]) if candidates.size else int(maxes[-1])
    beats = [tail]
    while backlink[beats[-1]] >= 0:
        beats.append(int(backlink[beats[-1]]))
    beats = np.array(beats[::-1], dtype=int)

    # Trim leading/trailing beats with negligible onset support.
    strengths = localscore[beats]
    keep = strengths > 0.02 * strengths.max()
    if keep.any():
        first, last = np.argmax(keep), len(keep) - np.argmax(keep[::-1]) - 1
        beats = beats[first : last + 1]
    return beats


def _local_maxima(x: np.ndarray) -> np.ndarray:
    if len(x) < 3:
        return np.arange(len(x))
    interior = (x[1:-1] >= x[:-2]) & (x[1:-1] > x[2:])
    return np.flatnonzero(interior) + 1


def _phase_spread(accents: np.ndarray, m: int) -> float:
    usable = len(accents) - len(accents) % m
    phases = accents[:usable].reshape(-1, m).mean(axis=0)
    return float(np.var(phases))


def _estimate_meter(accents: np.ndarray) -> tuple[int, int]:
    """Pick meter in {2,3,4} by the spread of per-phase accent means.

    Returns (meter, phase of the strongest accent). Meter 4 must beat its
    sub-period 2 by a clear margin, otherwise a period-2 accent pattern
    would read as 4/4 on noise alone.
    """
    spreads = {m: _phase_spread(accents, m) for m in (2, 3, 4) if len(accents) >= 2 * m}
    if not spreads:
        return 1, 0
    best_meter = max(spreads, key=lambda m: (spreads[m], -m))
    if best_meter == 4 and 2 in spreads and spreads[4] <= 1.2 * spreads[2]:
        best_meter = 2
    m = best_meter
    usable = len(accents) - len(accents) % m
    phase = int(np.argmax(accents[:usable].reshape(-1, m).mean(axis=0)))
    return m, phase


# ---------------------------------------------------------------------------
# Chords


def _chord_templates() -> tuple[np.ndarray, list[tuple[int, str]]]:
    """Unit-normalized binary templates for all 132 (root, ctype) pairs."""
    templates = []
    labels = []
    for root in range(12):
        for ctype, intervals in notation.CHORD_INTERVALS.items():
            vec = np.zeros(12)
            for iv in intervals:
                vec[(root + iv) % 12] = 1.0
            templates.append(vec / np.linalg.norm(vec))
            labels.append((root, ctype))
    return np.array(templates), labels


_TEMPLATES, _TEMPLATE_LABELS = _chord_templates()


def recognize_chords(clip: AudioClip) -> ChordSequence:
    """Template chord recognition with best-path smoothing.

    Frame chromas are matched against unit-normalized binary templates;
    the label path maximizes match score plus a self-transition bonus,
    runs shorter than the minimum chord length are dropped, and a chord is
    flagged inverted when the bass-register chroma peaks on a non-root
    chord tone.
    """
    if clip.duration < 1.0:
        raise ValueError("chord recognition needs at least 1 s of audio")
    work = resample(clip, PIPELINE_RATE)
    spec = stft(work, HARMONY_WINDOW, HARMONY_HOP)
    full = chroma(spec)
    bass = chroma(spec, max_hz=BASS_MAX_HZ)

    norms = np.linalg.norm(full.frames, axis=1)
    silent = norms <= 1e-9
    obs = np.where(silent[:, None], 0.0, full.frames / np.maximum(norms, 1e-12)[:, None])
    scores = obs @ _TEMPLATES.T  # [n_frames, 132]

    labels = _best_path(scores)
    labels[silent] = -1

    runs = _merge_runs(labels)
    min_frames = max(1, int(round(MIN_CHORD_RUN_SECONDS / full.hop_seconds)))
    entries = []
    for start, end, label in runs:
        if label < 0 or end - start < min_frames:
            continue
        root, ctype = _TEMPLATE_LABELS[label]
        inverted = _is_inverted(bass.frames[start:end], root, ctype)
        entries.append(
            ChordEvent(root, ctype, inverted, start * full.hop_seconds)
        )
    return ChordSequence(tuple(entries))


def _best_path(scores: np.ndarray, bonus: float = SELF_TRANSITION_BONUS) -> np.ndarray:
    """Max-sum path over frame label scores with a self-transition bonus."""
    n_frames, n_states = scores.shape
    labels = np.zeros(n_frames, dtype=int)
    if n_frames == 0:
        return labels
    prev = scores[0].copy()
    back = np.zeros((n_frames, n_states), dtype=int)
    for t in range(1, n_frames):
        stay = prev + bonus
        jump_from = int(np.argmax(prev))
        jump = prev[jump_from]
        use_stay = stay >= jump
        back[t] = np.where(use_stay, np.arange(n_states), jump_from)
        prev = scores[t] + np.where(use_stay, stay, jump)
    labels[-1] = int(np.argmax(prev))
    for t in range(n_frames - 1, 0, -1):
        labels[t - 1] = back[t, labels[t]]
    return labels


def _merge_runs(labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Consecutive identical labels -> (start, end, label) half-open runs."""
    runs = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t] != labels[start]:
            runs.append((start, t, int(labels[start])))
            start = t
    return runs


def _is_inverted(bass_frames: np.ndarray, root: int, ctype: str) -> bool:
    profile = bass_frames.sum(axis=0)
    if profile.max() <= 1e-9:
        return False
    peak = int(np.argmax(profile))
    tones = {(root + iv) % 12 for iv in notation.CHORD_INTERVALS[ctype]}
    return peak in tones and peak != root


# ---------------------------------------------------------------------------
# Key


def estimate_key(clip: AudioClip) -> KeyEstimate:
    """Krumhansl-Schmuckler key finding on the global mean chroma.

    The mean chroma is Pearson-correlated against the 24 rotations of the
    major/minor profiles; ties break toward major, then the lower root.
    """
    if clip.duration < 1.0:
        raise ValueError("key estimation needs at least 1 s of audio")
    work = resample(clip, PIPELINE_RATE)
    mean_chroma = chroma(stft(work, HARMONY_WINDOW, HARMONY_HOP)).frames.mean(axis=0)
    if mean_chroma.sum() <= 1e-12 or np.ptp(mean_chroma) <= 1e-12:
        raise NoKeyError("no tonal content to estimate a key from")
    best: KeyEstimate | None = None
    best_corr = -np.inf
    for mode, profile in (("major", KRUMHANSL_MAJOR), ("minor", KRUMHANSL_MINOR)):
        for root in range(12):
            rotated = np.roll(profile, root)
            corr = float(np.corrcoef(mean_chroma, rotated)[0, 1])
            if corr > best_corr + 1e-12:
                best_corr = corr
                best = KeyEstimate(root, mode)
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Feature dump format (one JSON object per clip, times at 3 decimals)


def features_to_json_obj(features: FeatureSet) -> dict:
    obj: dict = {}
    if features.beats is not None:
        obj["beats"] = [[e.beat_type, round(e.time_seconds, 3)] for e in features.beats.entries]
    if features.chords is not None:
        obj["chords"] = [
            [
                notation.pitch_class_name(e.root, flats=True),
                e.ctype,
                e.inverted,
                round(e.time_seconds, 3),
            ]
            for e in features.chords.entries
        ]
    if features.key is not None:
        obj["key"] = {
            "root": notation.pitch_class_name(features.key.root, flats=True),
            "mode": features.key.mode,
        }
    if features.tempo is not None:
        obj["bpm"] = round(features.tempo.bpm, 3)
    return obj


def features_from_json_obj(obj: dict) -> FeatureSet:
    beats = chords = key = tempo = None
    if "beats" in obj and obj["beats"] is not None:
        beats = BeatGrid(
            tuple(BeatEvent(int(t), float(s)) for t, s in obj["beats"])
        )
    if "chords" in obj and obj["chords"] is not None:
        chords = ChordSequence(
            tuple(
                ChordEvent(notation.parse_pitch_class(root), ctype, bool(inv), float(s))
                for root, ctype, inv, s in obj["chords"]
            )
        )
    if "key" in obj and obj["key"] is not None:
        key = KeyEstimate(notation.parse_pitch_class(obj["key"]["root"]), obj["key"]["mode"])
    if "bpm" in obj and obj["bpm"] is not None:
        tempo = TempoBPM(float(obj["bpm"]))
    return FeatureSet(beats=beats, chords=chords, key=key, tempo=tempo)


def features_to_json(features: FeatureSet) -> str:
    return json.dumps(features_to_json_obj(features))


def features_from_json(text: str) -> FeatureSet:
    return features_from_json_obj(json.loads(text))
