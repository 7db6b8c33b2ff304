"""The nine controllability metrics.

All scores are percentages; binary metrics score 100 for a match and 0
otherwise. Chord metrics compare (root, type) tokens and ignore inversion
flags and times. A metric is evaluated for a sample only when the ground
truth carries that feature.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

from . import notation
from .captions import tempo_bin_index
from .extract import FeatureSet

ChordToken = tuple[int, str]

METRIC_NAMES = ("TB", "TBT", "CK", "CKD", "PCM", "ECM", "CMO", "CMOT", "BM")


@dataclass(frozen=True)
class ControlSample:
    """Ground-truth features paired with features extracted from generated audio."""

    gt: FeatureSet
    pred: FeatureSet


@dataclass(frozen=True)
class MetricReport:
    means: dict[str, float]
    counts: dict[str, int]

    def to_json_obj(self) -> dict:
        return {
            name: {
                "mean": round(self.means[name], 4) if self.counts[name] else None,
                "count": self.counts[name],
            }
            for name in METRIC_NAMES
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


# ---------------------------------------------------------------------------
# Tempo


def tempo_bin_score(gt_bpm: float, pred_bpm: float) -> float:
    """TB: 100 iff the predicted BPM falls into the ground-truth tempo bin."""
    return 100.0 if tempo_bin_index(pred_bpm) == tempo_bin_index(gt_bpm) else 0.0


def tempo_bin_tolerant_score(gt_bpm: float, pred_bpm: float) -> float:
    """TBT: 100 iff the predicted bin is the ground-truth bin or a neighbor."""
    return 100.0 if abs(tempo_bin_index(pred_bpm) - tempo_bin_index(gt_bpm)) <= 1 else 0.0


# ---------------------------------------------------------------------------
# Key


def correct_key_score(gt: tuple[int, str], pred: tuple[int, str]) -> float:
    """CK: exact (root, mode) match on pitch classes."""
    return 100.0 if gt == pred else 0.0


def _relative_pair(a: tuple[int, str], b: tuple[int, str]) -> bool:
    if a[1] == "major" and b[1] == "minor":
        return (a[0] + 9) % 12 == b[0]
    if a[1] == "minor" and b[1] == "major":
        return (b[0] + 9) % 12 == a[0]
    return False


def correct_key_dup_score(gt: tuple[int, str], pred: tuple[int, str]) -> float:
    """CKD: CK plus equivalence of a major key with its relative minor."""
    if gt == pred or _relative_pair(gt, pred):
        return 100.0
    return 0.0


# ---------------------------------------------------------------------------
# Chords


def perfect_chord_match_score(gt: list[ChordToken], pred: list[ChordToken]) -> float:
    """PCM: identical length, order, roots, and types."""
    _require_gt(gt)
    return 100.0 if gt == pred else 0.0


def _lcs_length(a: list[ChordToken], b: list[ChordToken]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b):
            curr[j + 1] = prev[j] + 1 if x == y else max(curr[j], prev[j + 1])
        prev = curr
    return prev[-1]


def exact_chord_match_score(gt: list[ChordToken], pred: list[ChordToken]) -> float:
    """ECM: order-respecting match with tolerance for missing/excess chords.

    100 * |LCS(pred, gt)| / max(|pred|, |gt|).
    """
    _require_gt(gt)
    if not pred:
        return 0.0
    return 100.0 * _lcs_length(pred, gt) / max(len(pred), len(gt))


def chord_match_any_order_score(gt: list[ChordToken], pred: list[ChordToken]) -> float:
    """CMO: multiset overlap of (root, type) tokens, normalized by |gt|."""
    _require_gt(gt)
    overlap = sum((Counter(gt) & Counter(pred)).values())
    return 100.0 * overlap / len(gt)


def chord_match_major_minor_score(gt: list[ChordToken], pred: list[ChordToken]) -> float:
    """CMOT: CMO after collapsing chord types to binary major/minor."""
    _require_gt(gt)
    reduce = notation.reduce_major_minor
    gt_r = [(root, reduce(ctype)) for root, ctype in gt]
    pred_r = [(root, reduce(ctype)) for root, ctype in pred]
    overlap = sum((Counter(gt_r) & Counter(pred_r)).values())
    return 100.0 * overlap / len(gt_r)


def _require_gt(gt: list[ChordToken]) -> None:
    if not gt:
        raise ValueError("ground-truth chord sequence must be non-empty")


# ---------------------------------------------------------------------------
# Beat


def beat_match_score(gt_meter: int, pred_meter: int) -> float:
    """BM: 100 iff the predicted beat count equals the ground truth."""
    if not (1 <= gt_meter <= 4 and 1 <= pred_meter <= 4):
        raise ValueError("meters must be in 1..4")
    return 100.0 if gt_meter == pred_meter else 0.0


# ---------------------------------------------------------------------------
# Dataset evaluation


def _sample_scores(sample: ControlSample) -> dict[str, float]:
    gt, pred = sample.gt, sample.pred
    scores: dict[str, float] = {}
    if gt.tempo is not None:
        if pred.tempo is not None:
            scores["TB"] = tempo_bin_score(gt.tempo.bpm, pred.tempo.bpm)
            scores["TBT"] = tempo_bin_tolerant_score(gt.tempo.bpm, pred.tempo.bpm)
        else:
            scores["TB"] = scores["TBT"] = 0.0
    if gt.key is not None:
        gt_key = (gt.key.root, gt.key.mode)
        if pred.key is not None:
            pred_key = (pred.key.root, pred.key.mode)
            scores["CK"] = correct_key_score(gt_key, pred_key)
            scores["CKD"] = correct_key_dup_score(gt_key, pred_key)
        else:
            scores["CK"] = scores["CKD"] = 0.0
    if gt.chords is not None and gt.chords.entries:
        gt_tokens = gt.chords.tokens()
        pred_tokens = pred.chords.tokens() if pred.chords is not None else []
        scores["PCM"] = perfect_chord_match_score(gt_tokens, pred_tokens)
        scores["ECM"] = exact_chord_match_score(gt_tokens, pred_tokens)
        scores["CMO"] = chord_match_any_order_score(gt_tokens, pred_tokens)
        scores["CMOT"] = chord_match_major_minor_score(gt_tokens, pred_tokens)
    if gt.beats is not None and gt.beats.entries:
        if pred.beats is not None and pred.beats.entries:
            scores["BM"] = beat_match_score(gt.beats.meter, pred.beats.meter)
        else:
            scores["BM"] = 0.0
    return scores


def evaluate_dataset(samples: list[ControlSample]) -> MetricReport:
    """Mean of each metric over the samples where its ground truth exists."""
    if not samples:
        raise ValueError("cannot evaluate an empty sample list")
    sums = {name: 0.0 for name in METRIC_NAMES}
    counts = {name: 0 for name in METRIC_NAMES}
    for sample in samples:
        for name, score in _sample_scores(sample).items():
            sums[name] += score
            counts[name] += 1
    means = {
        name: (sums[name] / counts[name]) if counts[name] else float("nan")
        for name in METRIC_NAMES
    }
    return MetricReport(means=means, counts=counts)
