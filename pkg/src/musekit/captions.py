"""Caption templating, enrichment policies, and training-time dropout.

Control sentences are rendered from a fixed, versioned template table.
Enrichment policies decide how many control sentences a caption receives;
training dropout implements the input-robustness rules applied when a
denoiser is trained with classifier-free guidance.
"""

from __future__ import annotations

import json
import logging
import math
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from . import notation
from .augment import VolumeRamp
from .extract import FeatureSet

log = logging.getLogger(__name__)

CONTROL_TAGS = ("tempo", "key", "chords", "beat", "volume", "none")

# Half-open BPM bins (lo, hi] for the classical tempo words, in order.
TEMPO_BINS: tuple[tuple[float, float, str], ...] = (
    (0.0, 40.0, "Grave"),
    (40.0, 60.0, "Largo"),
    (60.0, 70.0, "Adagio"),
    (70.0, 90.0, "Andante"),
    (90.0, 110.0, "Moderato"),
    (110.0, 140.0, "Allegro"),
    (140.0, 160.0, "Vivace"),
    (160.0, 210.0, "Presto"),
    (210.0, float("inf"), "Prestissimo"),
)

TEMPO_MARKINGS: tuple[str, ...] = tuple(name for _, _, name in TEMPO_BINS)

# Drawing 0..4 control sentences with these percentage weights.
CONTROL_COUNT_WEIGHTS = (25, 30, 20, 15, 10)

# Fixed order in which control sentences are appended to a caption.
CONTROL_ORDER = ("chords", "beat", "tempo", "key")

LOW_QUALITY_TERMS = ("quality", "low fidelity")

REPHRASE_INSTRUCTION = (
    "I have a song for which the caption is the following:\n"
    "{caption}\n"
    "I have made some changes to the audio file which are optionally described "
    "towards the end of the caption. Can you rephrase the caption more naturally "
    "in a single paragraph using all the musical terms provided above? You should "
    "generate only the caption and nothing else. Do not use the word modification "
    "in your generation. The length of the new caption should be no more than "
    "eight sentences."
)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def load_templates() -> dict[str, list[str]]:
    with resources.files("musekit.data").joinpath("templates.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


TEMPLATES = load_templates()


@dataclass(frozen=True)
class Caption:
    """Ordered sentences with per-sentence control tags (``none`` = plain prose)."""

    sentences: tuple[str, ...]
    control_tags: tuple[str, ...]

    def __post_init__(self):
        sentences = tuple(self.sentences)
        tags = tuple(self.control_tags)
        if len(sentences) != len(tags):
            raise ValueError("control_tags must align 1:1 with sentences")
        if any(t not in CONTROL_TAGS for t in tags):
            raise ValueError(f"unknown control tag in {tags}")
        object.__setattr__(self, "sentences", sentences)
        object.__setattr__(self, "control_tags", tags)

    @classmethod
    def from_text(cls, text: str) -> "Caption":
        sentences = tuple(s for s in _SENTENCE_SPLIT.split(text.strip()) if s)
        return cls(sentences, ("none",) * len(sentences))

    @property
    def text(self) -> str:
        return " ".join(self.sentences)

    def appended(self, sentence: str, tag: str) -> "Caption":
        return Caption(self.sentences + (sentence,), self.control_tags + (tag,))


def tempo_to_marking(bpm: float) -> str:
    """Classical tempo word for a BPM, via half-open (lo, hi] bins."""
    if bpm <= 0:
        raise ValueError("bpm must be positive")
    return TEMPO_MARKINGS[tempo_bin_index(bpm)]


def tempo_bin_index(bpm: float) -> int:
    if bpm <= 0:
        raise ValueError("bpm must be positive")
    for idx, (lo, hi, _) in enumerate(TEMPO_BINS):
        if lo < bpm <= hi:
            return idx
    raise AssertionError("tempo bins must partition (0, inf)")


def is_low_quality(caption: Caption) -> bool:
    """True iff any sentence mentions 'quality' or 'low fidelity'."""
    text = caption.text.lower()
    return any(term in text for term in LOW_QUALITY_TERMS)


# ---------------------------------------------------------------------------
# Control-sentence rendering


def _chord_list_text(features: FeatureSet) -> str:
    assert features.chords is not None
    return ", ".join(
        notation.chord_name(e.root, e.ctype, flats=True) for e in features.chords.entries
    )


def render_control_sentence(tag: str, features: FeatureSet, rng: np.random.Generator,
                            volume: VolumeRamp | None = None) -> str:
    """Render one control sentence for ``tag`` from a uniformly chosen template."""
    if tag == "chords":
        template = TEMPLATES["chords"][rng.integers(len(TEMPLATES["chords"]))]
        return template.format(s=_chord_list_text(features))
    if tag == "beat":
        assert features.beats is not None
        template = TEMPLATES["beat"][rng.integers(len(TEMPLATES["beat"]))]
        return template.format(b=features.beats.meter)
    if tag == "tempo":
        assert features.tempo is not None
        pool = TEMPLATES["tempo_bpm"] + TEMPLATES["tempo_word"]
        idx = int(rng.integers(len(pool)))
        if idx < len(TEMPLATES["tempo_bpm"]):
            return pool[idx].format(i=round(features.tempo.bpm))
        return pool[idx].format(w=tempo_to_marking(features.tempo.bpm))
    if tag == "key":
        assert features.key is not None
        template = TEMPLATES["key"][rng.integers(len(TEMPLATES["key"]))]
        return template.format(
            root=notation.pitch_class_name(features.key.root, flats=True),
            m=features.key.mode,
        )
    if tag == "volume":
        assert volume is not None
        template = TEMPLATES["volume"][rng.integers(len(TEMPLATES["volume"]))]
        u = "increase" if volume.direction == "crescendo" else "decrease"
        return template.format(w=volume.direction, u=u, f=f"{volume.pivot_seconds:g}")
    raise ValueError(f"no template for tag {tag!r}")


def available_control_tags(features: FeatureSet) -> list[str]:
    tags = []
    for tag in CONTROL_ORDER:
        if tag == "chords" and features.chords is not None and features.chords.entries:
            tags.append(tag)
        elif tag == "beat" and features.beats is not None and features.beats.entries:
            tags.append(tag)
        elif tag == "tempo" and features.tempo is not None:
            tags.append(tag)
        elif tag == "key" and features.key is not None:
            tags.append(tag)
    return tags


def render_control_sentences(features: FeatureSet, rng: np.random.Generator,
                             volume: VolumeRamp | None = None) -> list[tuple[str, str]]:
    """One (sentence, tag) pair per available feature, in the fixed order."""
    tags = available_control_tags(features)
    if volume is not None:
        tags.append("volume")
    if not tags:
        raise ValueError("no features available to render control sentences from")
    return [(render_control_sentence(tag, features, rng, volume), tag) for tag in tags]


def sample_control_count(rng: np.random.Generator) -> int:
    """Draw how many control sentences to attach: 0..4 at 25/30/20/15/10 %."""
    weights = np.array(CONTROL_COUNT_WEIGHTS, dtype=float)
    return int(rng.choice(len(weights), p=weights / weights.sum()))


def enrich_caption(caption: Caption, features: FeatureSet, policy: str,
                   rng: np.random.Generator, volume: VolumeRamp | None = None) -> Caption:
    """Append control sentences per policy.

    ``all_four`` appends one sentence for every available feature;
    ``sampled`` draws the count 0..4 (weights 25/30/20/15/10) and picks
    which features uniformly without replacement. A volume ramp sentence,
    when a ramp descriptor is supplied, always rides along at the end.
    """
    available = available_control_tags(features)
    if policy == "all_four":
        chosen = available
    elif policy == "sampled":
        count = min(sample_control_count(rng), len(available))
        picked = rng.choice(len(available), size=count, replace=False) if count else []
        picked_set = {available[int(i)] for i in picked}
        chosen = [t for t in available if t in picked_set]
    else:
        raise ValueError(f"unknown enrichment policy {policy!r}")
    out = caption
    for tag in chosen:
        out = out.appended(render_control_sentence(tag, features, rng), tag)
    if volume is not None:
        out = out.appended(render_control_sentence("volume", features, rng, volume), "volume")
    return out


# ---------------------------------------------------------------------------
# Training dropout


def mask_probability(n_sentences: int, corpus_mean_sentences: float) -> float:
    """Prompt-masking probability in percent: min(100, 10 * N / M)."""
    if corpus_mean_sentences <= 0:
        raise ValueError("corpus mean sentence count must be positive")
    return min(100.0, 10.0 * n_sentences / corpus_mean_sentences)


def _strip_tag(caption: Caption, tag: str) -> Caption:
    kept = [(s, t) for s, t in zip(caption.sentences, caption.control_tags) if t != tag]
    return Caption(tuple(s for s, _ in kept), tuple(t for _, t in kept))


def training_dropout(caption: Caption, features: FeatureSet, rng: np.random.Generator,
                     corpus_mean_sentences: float) -> tuple[Caption, FeatureSet]:
    """Apply the three training-time dropout rules in order.

    1. With 5% probability drop all inputs (text, beats, chords).
    2. With 5% probability each, drop text / beats / chords independently;
       dropping a feature also strips its tagged control sentences so the
       caption never references an input the model cannot see.
    3. Mask the prompt with probability min(100, 10 N/M)%; a masked prompt
       loses X% of its sentences with X uniform in [20, 50], the removal
       count rounded half-up, removals chosen uniformly.
    """
    out_caption = caption
    out_features = features
    if rng.random() < 0.05:
        out_caption = Caption((), ())
        out_features = replace(out_features, beats=None, chords=None)
    else:
        if rng.random() < 0.05:
            out_caption = Caption((), ())
        if rng.random() < 0.05:
            out_features = replace(out_features, beats=None)
            out_caption = _strip_tag(out_caption, "beat")
        if rng.random() < 0.05:
            out_features = replace(out_features, chords=None)
            out_caption = _strip_tag(out_caption, "chords")
    n = len(out_caption.sentences)
    if n > 0 and rng.random() * 100.0 < mask_probability(n, corpus_mean_sentences):
        x = int(rng.integers(20, 51))
        n_remove = min(n, math.floor(n * x / 100.0 + 0.5))
        if n_remove:
            drop = set(rng.choice(n, size=n_remove, replace=False).tolist())
            kept = [
                (s, t)
                for i, (s, t) in enumerate(zip(out_caption.sentences, out_caption.control_tags))
                if i not in drop
            ]
            out_caption = Caption(tuple(s for s, _ in kept), tuple(t for _, t in kept))
    return out_caption, out_features


# ---------------------------------------------------------------------------
# External rephrasing hook


@dataclass(frozen=True)
class RephraseConfig:
    url: str
    timeout_seconds: float = 30.0


def rephrase_external(caption: Caption, config: RephraseConfig) -> Caption:
    """POST the caption to an external rephrasing endpoint.

    The request body carries the caption and the fixed instruction wrapper;
    the response must be JSON ``{"caption": string}``. Any failure falls
    back to the input caption with a logged warning.
    """
    body = json.dumps(
        {
            "caption": caption.text,
            "instruction": REPHRASE_INSTRUCTION.format(caption=caption.text),
        }
    ).encode("utf-8")
    request = urllib.request.Request(
        config.url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=config.timeout_seconds) as response:
            payload = json.loads(response.read().decode("utf-8"))
        text = payload["caption"]
    except (urllib.error.URLError, TimeoutError, KeyError, ValueError, OSError) as exc:
        log.warning("rephrase endpoint failed (%s); keeping original caption", exc)
        return caption
    return Caption.from_text(text)
