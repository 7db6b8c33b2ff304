import numpy as np
import pytest

from musekit.audio import AudioClip
from musekit.augment import pitch_shift, time_stretch
from musekit.errors import NoBeatsError, NoKeyError
from musekit.extract import (
    KRUMHANSL_MAJOR,
    KRUMHANSL_MINOR,
    BeatEvent,
    BeatGrid,
    ChordEvent,
    ChordSequence,
    FeatureSet,
    KeyEstimate,
    TempoBPM,
    estimate_key,
    estimate_tempo,
    features_from_json,
    features_to_json,
    recognize_chords,
    track_beats,
)

from conftest import HARMONIC_MINOR_STEPS, SR, click_train, scale_clip, triad_clip


class TestTypes:
    def test_beat_grid_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            BeatGrid((BeatEvent(1, 1.0), BeatEvent(2, 1.0)))

    def test_beat_grid_rejects_bad_type(self):
        with pytest.raises(ValueError):
            BeatGrid((BeatEvent(5, 1.0),))

    def test_chord_sequence_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            ChordSequence((ChordEvent(0, "maj", False, 2.0), ChordEvent(4, "min", False, 1.0)))

    def test_tempo_range(self):
        with pytest.raises(ValueError):
            TempoBPM(0.0)
        with pytest.raises(ValueError):
            TempoBPM(1200.0)


class TestEstimateTempo:
    def test_constant_interval(self):
        grid = BeatGrid(tuple(BeatEvent(1, t) for t in (0.0, 0.5, 1.0, 1.5)))
        assert estimate_tempo(grid).bpm == pytest.approx(120.0)

    def test_mean_of_reciprocals(self):
        grid = BeatGrid(tuple(BeatEvent(1, t) for t in (0.0, 0.4, 1.0)))
        # 60/0.4 = 150, 60/0.6 = 100, mean = 125
        assert estimate_tempo(grid).bpm == pytest.approx(125.0)

    def test_single_beat_fails(self):
        with pytest.raises(ValueError):
            estimate_tempo(BeatGrid((BeatEvent(1, 0.0),)))


class TestTrackBeats:
    def test_accented_click_train(self):
        grid = track_beats(click_train(0.5, accent_every=2))
        clicks = np.arange(0.0, 10.0, 0.5)
        for t in grid.times:
            assert min(abs(t - clicks)) <= 0.070
        assert grid.meter == 2
        # downbeats (type 1) land on the accented clicks (even indices)
        for e in grid.entries:
            nearest = int(round(e.time_seconds / 0.5))
            if e.beat_type == 1:
                assert nearest % 2 == 0

    def test_uniform_train_interval(self):
        grid = track_beats(click_train(0.4))
        assert np.median(np.diff(grid.times)) == pytest.approx(0.4, abs=0.05)

    def test_silence_raises(self):
        with pytest.raises(NoBeatsError):
            track_beats(AudioClip(np.zeros(3 * SR), SR))

    def test_short_clip_rejected(self):
        with pytest.raises(ValueError):
            track_beats(AudioClip(np.zeros(SR), SR))

    @pytest.mark.parametrize("accent,meter", [(3, 3), (4, 4)])
    def test_meter_from_accents(self, accent, meter):
        grid = track_beats(click_train(0.5, accent_every=accent))
        assert grid.meter == meter


AM_TRIAD = [220.0, 261.63, 329.63]
E_TRIAD = [329.63, 415.30, 493.88]


class TestRecognizeChords:
    def test_am_then_e(self):
        seq = recognize_chords(triad_clip([AM_TRIAD, E_TRIAD], 5.0))
        labels = [(e.root, e.ctype) for e in seq.entries]
        assert labels == [(9, "min"), (4, "maj")]
        assert seq.entries[0].time_seconds == pytest.approx(0.0, abs=0.2)
        assert seq.entries[1].time_seconds == pytest.approx(5.0, abs=0.2)

    def test_silence_empty(self):
        assert recognize_chords(AudioClip(np.zeros(2 * SR), SR)).entries == ()

    def test_inversion_from_bass(self):
        # C major triad with an E2 bass note
        clip = triad_clip([[82.41, 261.63, 329.63, 392.0]], 5.0)
        seq = recognize_chords(clip)
        assert len(seq.entries) == 1
        assert (seq.entries[0].root, seq.entries[0].ctype) == (0, "maj")
        assert seq.entries[0].inverted

    def test_root_position_not_inverted(self):
        seq = recognize_chords(triad_clip([AM_TRIAD], 5.0))
        assert not seq.entries[0].inverted

    def test_times_increasing_and_bounded(self):
        clip = triad_clip([AM_TRIAD, E_TRIAD, [261.63, 329.63, 392.0]], 3.0)
        seq = recognize_chords(clip)
        times = [e.time_seconds for e in seq.entries]
        assert all(b > a for a, b in zip(times, times[1:]))
        assert all(0 <= t <= clip.duration for t in times)

    def test_transposition_covariance(self):
        base = triad_clip([AM_TRIAD, E_TRIAD], 4.0)
        shifted = pitch_shift(base, 2)
        seq0 = recognize_chords(base)
        seq2 = recognize_chords(shifted)
        assert [(e.root + 2) % 12 for e in seq0.entries] == [e.root for e in seq2.entries]
        assert [e.ctype for e in seq0.entries] == [e.ctype for e in seq2.entries]


class TestEstimateKey:
    def test_c_major_scale(self):
        assert estimate_key(scale_clip(0)) == KeyEstimate(0, "major")

    def test_a_harmonic_minor(self):
        clip = scale_clip(9, steps=HARMONIC_MINOR_STEPS, base_hz=220.0 / 2 ** (9 / 12))
        assert estimate_key(clip) == KeyEstimate(9, "minor")

    def test_silence_raises(self):
        with pytest.raises(NoKeyError):
            estimate_key(AudioClip(np.zeros(2 * SR), SR))

    def test_against_correlation_oracle(self):
        """Independent recomputation: chroma + corrcoef over all 24 keys."""
        from musekit.audio import chroma, resample, stft
        from musekit.extract import HARMONY_HOP, HARMONY_WINDOW, PIPELINE_RATE

        clip = scale_clip(7)  # G major
        mean = chroma(stft(resample(clip, PIPELINE_RATE), HARMONY_WINDOW, HARMONY_HOP)).frames.mean(axis=0)
        best, best_corr = None, -np.inf
        for mode, profile in (("major", KRUMHANSL_MAJOR), ("minor", KRUMHANSL_MINOR)):
            for root in range(12):
                corr = np.corrcoef(mean, np.roll(profile, root))[0, 1]
                if corr > best_corr:
                    best, best_corr = (root, mode), corr
        assert estimate_key(clip) == KeyEstimate(*best)
        assert best == (7, "major")

    @pytest.mark.parametrize("root", range(12))
    def test_major_scales_all_roots(self, root):
        assert estimate_key(scale_clip(root)) == KeyEstimate(root, "major")

    def test_transposition_covariance(self):
        clip = scale_clip(2)  # D major
        shifted = pitch_shift(clip, 3)
        key = estimate_key(shifted)
        assert key.root == (2 + 3) % 12
        assert key.mode == "major"


class TestCovarianceProperties:
    def test_tempo_stretch_covariance(self):
        clip = click_train(0.5, accent_every=2)
        base = estimate_tempo(track_beats(clip)).bpm
        stretched = time_stretch(clip, 1.25)
        fast = estimate_tempo(track_beats(stretched)).bpm
        assert fast == pytest.approx(base * 1.25, rel=0.08)


class TestFeatureDump:
    def test_json_round_trip(self):
        features = FeatureSet(
            beats=BeatGrid((BeatEvent(1, 0.5), BeatEvent(2, 1.0))),
            chords=ChordSequence((ChordEvent(10, "min", False, 0.0), ChordEvent(8, "maj", True, 5.0))),
            key=KeyEstimate(10, "minor"),
            tempo=TempoBPM(120.5),
        )
        back = features_from_json(features_to_json(features))
        assert back.beats.entries == features.beats.entries
        assert back.chords.entries == features.chords.entries
        assert back.key == features.key
        assert back.tempo.bpm == pytest.approx(120.5)

    def test_dump_uses_flat_names_and_3dp(self):
        import json

        features = FeatureSet(
            chords=ChordSequence((ChordEvent(10, "min", False, 1.23456),)),
            key=KeyEstimate(3, "minor"),
        )
        obj = json.loads(features_to_json(features))
        assert obj["chords"][0][0] == "Bb"
        assert obj["chords"][0][3] == 1.235
        assert obj["key"] == {"root": "Eb", "mode": "minor"}
