"""Dataset construction: enriched train splits, test splits, and the
pseudo-captioned evaluation set.

Manifests are JSON Lines, one record per line, UTF-8, stable key order.
Every augmented record carries full provenance (source id, augmentation
descriptor, RNG seed), and per-record RNG substreams keyed by
(seed, source id, variant index) make builds reproducible regardless of
processing order.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import augment as aug_mod
from .audio import AudioClip, read_wav, write_wav
from .augment import (
    VolumeRamp,
    apply_augmentation,
    augmentation_to_json_obj,
    co_transform_features,
    plan_augmentations,
)
from .captions import Caption, RephraseConfig, enrich_caption, is_low_quality, rephrase_external
from .extract import FeatureSet, extract_features, features_from_json_obj, features_to_json_obj

log = logging.getLogger(__name__)

SPLITS = ("TrainA", "TrainB", "TrainC", "TrainAug", "TestA", "TestB", "FMACaps")

REPHRASED_SHARE = 0.85

FRAGMENT_SECONDS = 10.0


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    audio_path: str
    caption: Caption
    features: FeatureSet | None
    split: str
    provenance: dict

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "audio_path": self.audio_path,
            "caption": {
                "sentences": list(self.caption.sentences),
                "control_tags": list(self.caption.control_tags),
            },
            "features": features_to_json_obj(self.features) if self.features is not None else None,
            "split": self.split,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ManifestRecord":
        caption = Caption(
            tuple(obj["caption"]["sentences"]), tuple(obj["caption"]["control_tags"])
        )
        features = (
            features_from_json_obj(obj["features"]) if obj.get("features") is not None else None
        )
        return cls(
            id=obj["id"],
            audio_path=obj["audio_path"],
            caption=caption,
            features=features,
            split=obj["split"],
            provenance=obj.get("provenance", {}),
        )


def write_manifest(path, records: list[ManifestRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_obj(), ensure_ascii=False) + "\n")


def load_manifest(path) -> list[ManifestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ManifestRecord.from_json_obj(json.loads(line)))
    return records


def load_source_manifest(path) -> list[ManifestRecord]:
    """Read a minimal source manifest: ``{"id", "audio_path", "caption"}`` rows."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if isinstance(obj.get("caption"), dict):
                caption = Caption(
                    tuple(obj["caption"]["sentences"]), tuple(obj["caption"]["control_tags"])
                )
            else:
                caption = Caption.from_text(obj["caption"])
            records.append(
                ManifestRecord(
                    id=obj["id"],
                    audio_path=obj["audio_path"],
                    caption=caption,
                    features=features_from_json_obj(obj["features"])
                    if obj.get("features")
                    else None,
                    split=obj.get("split", "TrainA"),
                    provenance=obj.get("provenance", {"source_id": obj["id"]}),
                )
            )
    return records


def _stable_digest(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def record_rng(seed: int, record_id: str, variant: int = 0) -> np.random.Generator:
    """Deterministic per-record RNG substream keyed by (seed, id, variant)."""
    return np.random.default_rng([seed, _stable_digest(record_id), variant])


# ---------------------------------------------------------------------------
# Test splits


def make_test_splits(records: list[ManifestRecord], seed: int,
                     test_fraction: float = 0.2
                     ) -> tuple[list[ManifestRecord], list[ManifestRecord], list[ManifestRecord]]:
    """Split off TestA/TestB, balanced across low/high-quality captions.

    Returns (TestA, TestB, remaining training pool). The per-class test
    count is round(test_fraction * len(records) / 2); TestB shares TestA's
    audio with all four control sentences appended.
    """
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must be in [0, 1)")
    rng = np.random.default_rng([seed, _stable_digest("test-split")])
    low = [r for r in records if is_low_quality(r.caption)]
    high = [r for r in records if not is_low_quality(r.caption)]
    per_class = int(round(test_fraction * len(records) / 2.0))
    if per_class > min(len(low), len(high)):
        raise ValueError(
            f"not enough records per quality class for {per_class} test samples each"
        )
    test_ids: set[str] = set()
    for pool in (low, high):
        order = rng.permutation(len(pool))
        test_ids.update(pool[i].id for i in order[:per_class])
    test_a, train_pool = [], []
    for record in records:
        if record.id in test_ids:
            test_a.append(replace(record, split="TestA"))
        else:
            train_pool.append(record)
    test_b = []
    for record in test_a:
        if record.features is None:
            raise ValueError(f"record {record.id} lacks features needed for TestB")
        enriched = enrich_caption(
            record.caption, record.features, "all_four", record_rng(seed, record.id, 1)
        )
        test_b.append(
            replace(record, id=record.id + ".testB", caption=enriched, split="TestB",
                    provenance={**record.provenance, "derived_from": record.id})
        )
    return test_a, test_b, train_pool


# ---------------------------------------------------------------------------
# Train set construction


def _maybe_rephrase(caption: Caption, rephrase: RephraseConfig | None) -> Caption:
    if rephrase is None:
        return caption
    return rephrase_external(caption, rephrase)


def build_musicbench(train_a: list[ManifestRecord], out_dir, seed: int,
                     rephrase: RephraseConfig | None = None,
                     window_seconds: float = aug_mod.CLIP_WINDOW_SECONDS
                     ) -> dict[str, list[ManifestRecord]]:
    """Build the enriched train splits from a feature-complete TrainA pool.

    TrainB appends all four control sentences; TrainC is rephrased TrainB
    (identity fallback without a client); TrainAug holds 11 variants per
    high-quality record (6 pitch shifts, 4 speed changes, 1 volume ramp)
    with co-transformed features, sampled control sentences, and an 85/15
    rephrased/original mix. Records whose audio is missing or unreadable
    are skipped with a log entry.
    """
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)

    train_b: list[ManifestRecord] = []
    train_c: list[ManifestRecord] = []
    train_aug: list[ManifestRecord] = []

    for record in train_a:
        if record.features is None:
            log.warning("skipping %s: no features", record.id)
            continue
        rng_b = record_rng(seed, record.id, 1)
        caption_b = enrich_caption(record.caption, record.features, "all_four", rng_b)
        train_b.append(
            replace(record, id=record.id + ".B", caption=caption_b, split="TrainB",
                    provenance={**record.provenance, "derived_from": record.id})
        )
        caption_c = _maybe_rephrase(caption_b, rephrase)
        train_c.append(
            replace(record, id=record.id + ".C", caption=caption_c, split="TrainC",
                    provenance={**record.provenance, "derived_from": record.id,
                                "rephrased": rephrase is not None})
        )

    for record in train_a:
        if record.features is None or is_low_quality(record.caption):
            continue
        try:
            clip = read_wav(record.audio_path)
        except Exception as exc:  # noqa: BLE001 - any audio failure skips the record
            log.warning("skipping augmentation of %s: %s", record.id, exc)
            continue
        plan = plan_augmentations(record_rng(seed, record.id, 2), clip.duration)
        for variant, augmentation in enumerate(plan):
            rng_v = record_rng(seed, record.id, 10 + variant)
            try:
                new_clip = apply_augmentation(clip, augmentation)
            except Exception as exc:  # noqa: BLE001
                log.warning("augmentation %s of %s failed: %s", augmentation, record.id, exc)
                continue
            new_id = f"{record.id}.aug{variant}"
            audio_path = audio_dir / f"{new_id}.wav"
            write_wav(new_clip, audio_path)
            features = co_transform_features(
                record.features, augmentation, window_seconds=window_seconds
            )
            volume = augmentation if isinstance(augmentation, VolumeRamp) else None
            caption = enrich_caption(record.caption, features, "sampled", rng_v, volume=volume)
            rephrased = bool(rng_v.random() < REPHRASED_SHARE)
            if rephrased and rephrase is not None:
                caption = _maybe_rephrase(caption, rephrase)
            train_aug.append(
                ManifestRecord(
                    id=new_id,
                    audio_path=str(audio_path),
                    caption=caption,
                    features=features,
                    split="TrainAug",
                    provenance={
                        "source_id": record.id,
                        "augmentation": augmentation_to_json_obj(augmentation),
                        "seed": seed,
                        "variant": variant,
                        "rephrased": rephrased,
                    },
                )
            )

    train = list(train_a) + train_b + train_c + train_aug
    return {
        "TrainA": list(train_a),
        "TrainB": train_b,
        "TrainC": train_c,
        "TrainAug": train_aug,
        "train": train,
    }


def check_no_leakage(train_records: list[ManifestRecord],
                     test_records: list[ManifestRecord]) -> None:
    """Fail if any test-source audio id reaches a train split."""
    test_sources = {r.provenance.get("source_id", r.id) for r in test_records}
    for record in train_records:
        source = record.provenance.get("source_id", record.id)
        if source in test_sources:
            raise ValueError(f"train record {record.id} leaks test source {source}")


# ---------------------------------------------------------------------------
# FMACaps-style evaluation set


_TAG_SENTENCES = {
    "genre": "This is a {value} track.",
    "instrument": "It features {value}.",
    "mood": "The mood is {value}.",
    "voice": "The voice is {value}.",
}


def caption_from_tags(tags: dict) -> Caption:
    """Deterministic pseudo-caption from tagger output, one sentence per category."""
    sentences = []
    for category in sorted(tags):
        value = tags[category]
        if isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        template = _TAG_SENTENCES.get(category, f"Its {category} is {{value}}.")
        sentences.append(template.format(value=value))
    if not sentences:
        raise ValueError("no tags to build a caption from")
    return Caption(tuple(sentences), ("none",) * len(sentences))


def build_fmacaps(audio_dir, tags: dict[str, dict], seed: int, out_dir,
                  expert_captions: dict[str, str] | None = None) -> list[ManifestRecord]:
    """Assemble a pseudo-captioned evaluation set from a directory of audio.

    Each file contributes one random 10-second fragment; its caption comes
    from the expert-caption table when present, else from a template join
    of its tags, and control sentences are sampled at 25/30/20/15/10 %.
    Files without tags are skipped with a log entry.
    """
    audio_dir = Path(audio_dir)
    out_dir = Path(out_dir)
    fragment_dir = out_dir / "fragments"
    fragment_dir.mkdir(parents=True, exist_ok=True)
    expert_captions = expert_captions or {}
    records = []
    for wav_path in sorted(audio_dir.glob("*.wav")):
        clip_id = wav_path.stem
        if clip_id not in tags:
            log.warning("skipping %s: no tags", clip_id)
            continue
        try:
            clip = read_wav(wav_path)
        except Exception as exc:  # noqa: BLE001
            log.warning("skipping %s: %s", clip_id, exc)
            continue
        fragment_len = int(round(FRAGMENT_SECONDS * clip.sample_rate))
        if len(clip.samples) < fragment_len:
            log.warning("skipping %s: shorter than %.0f s", clip_id, FRAGMENT_SECONDS)
            continue
        rng = record_rng(seed, clip_id)
        start = int(rng.integers(0, len(clip.samples) - fragment_len + 1))
        fragment = AudioClip(clip.samples[start : start + fragment_len], clip.sample_rate)
        fragment_path = fragment_dir / f"{clip_id}.wav"
        write_wav(fragment, fragment_path)
        features = extract_features(fragment)
        if clip_id in expert_captions:
            caption = Caption.from_text(expert_captions[clip_id])
        else:
            caption = caption_from_tags(tags[clip_id])
        caption = enrich_caption(caption, features, "sampled", rng)
        records.append(
            ManifestRecord(
                id=clip_id,
                audio_path=str(fragment_path),
                caption=caption,
                features=features,
                split="FMACaps",
                provenance={
                    "source_id": clip_id,
                    "fragment_start_seconds": round(start / clip.sample_rate, 3),
                    "seed": seed,
                },
            )
        )
    return records
