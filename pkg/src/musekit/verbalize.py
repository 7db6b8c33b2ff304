"""Wire formats for the text-to-feature predictors.

Beats travel as ``Timestamps: 0.50, 1.00, Max Beat: 2`` and chords as
``Am at 1.11; E at 4.14; C#maj7 at 7.18``. Parsing is the exact inverse of
verbalization; chord names use sharp spellings so round-trips are
byte-stable. Predicted times beyond the 10-second clip window are dropped.
"""

from __future__ import annotations

import re

import numpy as np

from . import notation
from .errors import VerbalizationError
from .extract import BeatEvent, BeatGrid, ChordEvent, ChordSequence

CLIP_WINDOW_SECONDS = 10.0

_BEATS_RE = re.compile(r"^Timestamps: (.*), Max Beat: (\d+)$")


def verbalize_beats(grid: BeatGrid) -> str:
    """Format a beat grid as ``Timestamps: <t1>, <t2>, ..., Max Beat: <m>``."""
    if not grid.entries:
        raise ValueError("cannot verbalize an empty beat grid")
    times = ", ".join(f"{e.time_seconds:.2f}" for e in grid.entries)
    return f"Timestamps: {times}, Max Beat: {grid.meter}"


def parse_beats_verbalization(text: str) -> tuple[int, list[float]]:
    """Parse the beat wire format into ``(meter, timestamps)``."""
    match = _BEATS_RE.match(text)
    if match is None:
        raise VerbalizationError(f"malformed beats verbalization: {text!r}")
    meter = int(match.group(2))
    if not 1 <= meter <= 4:
        raise VerbalizationError(f"meter must be in 1..4, got {meter}")
    body = match.group(1).strip()
    if not body:
        return meter, []
    times = []
    for token in body.split(", "):
        try:
            times.append(float(token))
        except ValueError as exc:
            raise VerbalizationError(f"non-numeric timestamp {token!r}") from exc
    return meter, times


def verbalize_chords(seq: ChordSequence) -> str:
    """Format a chord sequence as ``<Name> at <t>; ...`` with sharp spellings."""
    return "; ".join(
        f"{notation.chord_name(e.root, e.ctype, flats=False)} at {e.time_seconds:.2f}"
        for e in seq.entries
    )


def parse_chords_verbalization(text: str) -> ChordSequence:
    """Parse the chord wire format; entries beyond 10 s are dropped."""
    text = text.strip()
    if not text:
        return ChordSequence(())
    entries = []
    last_time = -np.inf
    for token in text.split("; "):
        name, sep, time_text = token.rpartition(" at ")
        if not sep:
            raise VerbalizationError(f"missing ' at ' in chord token {token!r}")
        try:
            root, ctype = notation.parse_chord_name(name)
        except ValueError as exc:
            raise VerbalizationError(str(exc)) from exc
        try:
            time = float(time_text)
        except ValueError as exc:
            raise VerbalizationError(f"non-numeric chord time {time_text!r}") from exc
        if time <= last_time:
            raise VerbalizationError("chord times must be strictly increasing")
        last_time = time
        entries.append(ChordEvent(root, ctype, False, time))
    kept = tuple(e for e in entries if e.time_seconds <= CLIP_WINDOW_SECONDS)
    return ChordSequence(kept)


def decode_beat_prediction(meter: int, intervals: list[float]) -> BeatGrid:
    """Turn predicted inter-beat intervals into a beat grid.

    Cumulative sums become beat times, beat types cycle 1..meter, and
    times beyond the 10-second window are dropped.
    """
    if not 1 <= meter <= 4:
        raise ValueError("meter must be in 1..4")
    if any(iv <= 0 for iv in intervals):
        raise ValueError("intervals must be positive")
    times = np.cumsum(intervals)
    entries = tuple(
        BeatEvent(i % meter + 1, float(t))
        for i, t in enumerate(times)
        if t <= CLIP_WINDOW_SECONDS
    )
    return BeatGrid(entries)
