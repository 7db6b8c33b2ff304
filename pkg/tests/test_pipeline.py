import hashlib
import json

import numpy as np
import pytest

from musekit.audio import read_wav, write_wav
from musekit.captions import Caption, is_low_quality
from musekit.extract import (
    BeatEvent,
    BeatGrid,
    ChordEvent,
    ChordSequence,
    FeatureSet,
    KeyEstimate,
    TempoBPM,
    extract_features,
)
from musekit.pipeline import (
    ManifestRecord,
    build_fmacaps,
    build_musicbench,
    caption_from_tags,
    check_no_leakage,
    load_manifest,
    load_source_manifest,
    make_test_splits,
    record_rng,
    write_manifest,
)

from conftest import music_clip


def synthetic_features():
    return FeatureSet(
        beats=BeatGrid(tuple(BeatEvent(i % 2 + 1, 0.5 * (i + 1)) for i in range(8))),
        chords=ChordSequence((ChordEvent(0, "maj", False, 0.0), ChordEvent(7, "maj", False, 5.0))),
        key=KeyEstimate(0, "major"),
        tempo=TempoBPM(120.0),
    )


@pytest.fixture(scope="module")
def source_corpus(tmp_path_factory):
    """Ten high-quality records with real (synthesized) audio and features."""
    root = tmp_path_factory.mktemp("corpus")
    records = []
    for i in range(10):
        path = root / f"clip{i}.wav"
        write_wav(music_clip(seed=i), path)
        features = extract_features(read_wav(path))
        records.append(
            ManifestRecord(
                id=f"clip{i}",
                audio_path=str(path),
                caption=Caption.from_text("A cheerful ukulele tune. It is instrumental."),
                features=features,
                split="TrainA",
                provenance={"source_id": f"clip{i}"},
            )
        )
    return records


class TestManifestIO:
    def test_round_trip(self, tmp_path):
        record = ManifestRecord(
            id="r1",
            audio_path="/tmp/a.wav",
            caption=Caption(("A tune.", "The beat is 2."), ("none", "beat")),
            features=synthetic_features(),
            split="TrainA",
            provenance={"source_id": "r1"},
        )
        path = tmp_path / "m.jsonl"
        write_manifest(path, [record])
        back = load_manifest(path)
        assert back[0].id == "r1"
        assert back[0].caption == record.caption
        assert back[0].features.key == record.features.key

    def test_source_manifest_plain_caption(self, tmp_path):
        path = tmp_path / "src.jsonl"
        path.write_text(json.dumps({"id": "x", "audio_path": "a.wav", "caption": "One. Two."}) + "\n")
        records = load_source_manifest(path)
        assert records[0].caption.sentences == ("One.", "Two.")

    def test_record_rng_stable(self):
        a = record_rng(7, "clip1", 3).integers(0, 1_000_000)
        b = record_rng(7, "clip1", 3).integers(0, 1_000_000)
        c = record_rng(7, "clip2", 3).integers(0, 1_000_000)
        assert a == b
        assert a != c


class TestBuildMusicbench:
    def test_count_formula_on_mini_corpus(self, source_corpus, tmp_path):
        splits = build_musicbench(source_corpus, tmp_path / "out", seed=42)
        assert len(splits["TrainA"]) == 10
        assert len(splits["TrainB"]) == 10
        assert len(splits["TrainC"]) == 10
        assert len(splits["TrainAug"]) == 110
        assert len(splits["train"]) == 3 * 10 + 11 * 10

    def test_variant_mix_per_record(self, source_corpus, tmp_path):
        splits = build_musicbench(source_corpus[:1], tmp_path / "one", seed=1)
        kinds = [r.provenance["augmentation"]["kind"] for r in splits["TrainAug"]]
        assert kinds.count("pitch_shift") == 6
        assert kinds.count("time_stretch") == 4
        assert kinds.count("volume_ramp") == 1
        shifts = sorted(
            r.provenance["augmentation"]["k"]
            for r in splits["TrainAug"]
            if r.provenance["augmentation"]["kind"] == "pitch_shift"
        )
        assert shifts == [-3, -2, -1, 1, 2, 3]

    def test_low_quality_excluded_from_aug_only(self, source_corpus, tmp_path):
        records = list(source_corpus)
        lq = ManifestRecord(
            id="lq0",
            audio_path=records[0].audio_path,
            caption=Caption.from_text("A low fidelity beat."),
            features=records[0].features,
            split="TrainA",
            provenance={"source_id": "lq0"},
        )
        splits = build_musicbench(records + [lq], tmp_path / "lq", seed=3)
        assert any(r.id == "lq0" for r in splits["TrainA"])
        assert any(r.id == "lq0.B" for r in splits["TrainB"])
        assert any(r.id == "lq0.C" for r in splits["TrainC"])
        assert not any(r.provenance["source_id"] == "lq0" for r in splits["TrainAug"])
        assert len(splits["TrainAug"]) == 110

    def test_determinism(self, source_corpus, tmp_path):
        def fingerprint(splits):
            objs = []
            for row in splits["train"]:
                obj = row.to_json_obj()
                obj.pop("audio_path")  # differs by output directory
                objs.append(obj)
            return hashlib.sha256(
                "\n".join(json.dumps(o, sort_keys=True) for o in objs).encode()
            ).hexdigest()

        s1 = build_musicbench(source_corpus, tmp_path / "d1", seed=42)
        s2 = build_musicbench(source_corpus, tmp_path / "d2", seed=42)
        assert fingerprint(s1) == fingerprint(s2)

    def test_aug_features_consistent_with_parent(self, source_corpus, tmp_path):
        splits = build_musicbench(source_corpus, tmp_path / "cons", seed=5)
        parents = {r.id: r for r in splits["TrainA"]}
        for row in splits["TrainAug"]:
            parent = parents[row.provenance["source_id"]]
            aug = row.provenance["augmentation"]
            if aug["kind"] == "pitch_shift" and parent.features.key is not None:
                assert row.features.key.root == (parent.features.key.root + aug["k"]) % 12
                assert row.features.key.mode == parent.features.key.mode
            if aug["kind"] == "time_stretch" and parent.features.tempo is not None:
                assert row.features.tempo.bpm == pytest.approx(
                    parent.features.tempo.bpm * aug["factor"]
                )

    def test_missing_audio_skipped_not_fatal(self, source_corpus, tmp_path, caplog):
        broken = ManifestRecord(
            id="ghost",
            audio_path=str(tmp_path / "missing.wav"),
            caption=Caption.from_text("A bright tune."),
            features=synthetic_features(),
            split="TrainA",
            provenance={"source_id": "ghost"},
        )
        with caplog.at_level("WARNING"):
            splits = build_musicbench([broken], tmp_path / "skip", seed=1)
        assert splits["TrainAug"] == []
        assert len(splits["TrainB"]) == 1  # caption work proceeds without audio
        assert any("ghost" in r.message for r in caplog.records)

    def test_augmented_audio_written(self, source_corpus, tmp_path):
        splits = build_musicbench(source_corpus[:1], tmp_path / "wav", seed=2)
        for row in splits["TrainAug"]:
            clip = read_wav(row.audio_path)
            assert clip.duration > 5.0


class TestTestSplits:
    def _mixed_corpus(self, source_corpus):
        records = []
        for i, base in enumerate(source_corpus):
            text = (
                "Poor audio quality recording of a band."
                if i < 5
                else "A bright piano melody over soft drums."
            )
            records.append(
                ManifestRecord(
                    id=f"m{i}",
                    audio_path=base.audio_path,
                    caption=Caption.from_text(text),
                    features=synthetic_features(),
                    split="TrainA",
                    provenance={"source_id": f"m{i}"},
                )
            )
        # double it to 20 records: 10 LQ / 10 HQ
        more = []
        for record in records:
            more.append(
                ManifestRecord(
                    id=record.id + "x",
                    audio_path=record.audio_path,
                    caption=record.caption,
                    features=record.features,
                    split="TrainA",
                    provenance={"source_id": record.id + "x"},
                )
            )
        return records + more

    def test_proportional_split(self, source_corpus):
        corpus = self._mixed_corpus(source_corpus)
        test_a, test_b, pool = make_test_splits(corpus, seed=1, test_fraction=0.2)
        assert len(test_a) == 4
        assert sum(is_low_quality(r.caption) for r in test_a) == 2
        assert len(test_b) == len(test_a)
        assert len(pool) == 16

    def test_testb_adds_four_sentences(self, source_corpus):
        corpus = self._mixed_corpus(source_corpus)
        test_a, test_b, _ = make_test_splits(corpus, seed=1, test_fraction=0.2)
        for a, b in zip(test_a, test_b):
            assert len(b.caption.sentences) == len(a.caption.sentences) + 4
            assert b.audio_path == a.audio_path

    def test_no_leakage(self, source_corpus, tmp_path):
        corpus = self._mixed_corpus(source_corpus)
        test_a, test_b, pool = make_test_splits(corpus, seed=1, test_fraction=0.2)
        splits = build_musicbench(pool, tmp_path / "leak", seed=1)
        check_no_leakage(splits["train"], test_a + test_b)
        with pytest.raises(ValueError):
            check_no_leakage(splits["train"] + [test_a[0]], test_a)

    def test_insufficient_records(self, source_corpus):
        corpus = self._mixed_corpus(source_corpus)[:4]  # all LQ
        with pytest.raises(ValueError):
            make_test_splits(corpus, seed=1, test_fraction=0.5)


class TestFmacaps:
    def test_caption_contains_tag_words(self):
        caption = caption_from_tags({"genre": "rock", "instrument": "guitar"})
        assert "rock" in caption.text
        assert "guitar" in caption.text

    def test_build(self, tmp_path):
        audio_dir = tmp_path / "fma"
        audio_dir.mkdir()
        for i in range(3):
            write_wav(music_clip(seed=i, duration=12.0), audio_dir / f"song{i}.wav")
        write_wav(music_clip(seed=9, duration=4.0), audio_dir / "short.wav")
        tags = {
            "song0": {"genre": "rock", "instrument": "guitar"},
            "song1": {"genre": "jazz", "mood": "calm"},
            # song2 intentionally untagged -> skipped
            "short": {"genre": "pop"},
        }
        records = build_fmacaps(audio_dir, tags, seed=4, out_dir=tmp_path / "out",
                                expert_captions={"song1": "An expert-written caption."})
        ids = {r.id for r in records}
        assert ids == {"song0", "song1"}  # song2 no tags, short too short
        for record in records:
            clip = read_wav(record.audio_path)
            assert len(clip.samples) == 10 * clip.sample_rate
        expert = next(r for r in records if r.id == "song1")
        assert expert.caption.sentences[0] == "An expert-written caption."

    def test_fragment_deterministic(self, tmp_path):
        audio_dir = tmp_path / "fma"
        audio_dir.mkdir()
        write_wav(music_clip(seed=1, duration=12.0), audio_dir / "a.wav")
        tags = {"a": {"genre": "rock"}}
        r1 = build_fmacaps(audio_dir, tags, seed=4, out_dir=tmp_path / "o1")
        r2 = build_fmacaps(audio_dir, tags, seed=4, out_dir=tmp_path / "o2")
        assert r1[0].provenance["fragment_start_seconds"] == r2[0].provenance["fragment_start_seconds"]
        assert r1[0].caption == r2[0].caption
