"""Condition encoders and the cross-attention conditioning chain.

Pitch and time values are embedded with interleaved sin/cos pairs, so a
shift of the input acts as a block-diagonal rotation of the embedding:
intervals between pitches (and gaps between onsets) are translation
invariant. Beat and chord encoders concatenate one-hot fields with these
embeddings and project through a trainable linear map; absent conditions
are represented by a learned constant null row so attention stays
well-formed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import notation
from .extract import BeatGrid, ChordSequence

D_MODEL = 64
D_PITCH = 32
D_TIME = 32
MAX_BEAT_TYPE = 4


@dataclass(frozen=True)
class SinusoidalConfig:
    """Interleaved sin/cos embedding with frequencies base**(-2k/dim)."""

    dim: int
    base: float = 10_000.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ValueError("embedding dim must be a positive even number")
        if self.base <= 1.0:
            raise ValueError("base must be > 1")

    @property
    def frequencies(self) -> np.ndarray:
        k = np.arange(self.dim // 2)
        return self.base ** (-2.0 * k / self.dim)


def sinusoidal_embed(value: float, cfg: SinusoidalConfig) -> np.ndarray:
    """[sin(x w_0), cos(x w_0), sin(x w_1), ...] for input x."""
    angles = value * cfg.frequencies
    out = np.empty(cfg.dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def pitch_embedding(pitch_class: float, cfg: SinusoidalConfig) -> np.ndarray:
    """Embed a (possibly fractional) pitch class; transposition = rotation."""
    return sinusoidal_embed(float(pitch_class), cfg)


def time_embedding(seconds: float, cfg: SinusoidalConfig) -> np.ndarray:
    """Embed an onset/beat time in seconds; time shift = rotation."""
    return sinusoidal_embed(float(seconds), cfg)


def shift_rotation(shift: float, cfg: SinusoidalConfig) -> np.ndarray:
    """Block-diagonal rotation R_s with embed(x + s) = R_s @ embed(x)."""
    rot = np.zeros((cfg.dim, cfg.dim))
    for k, w in enumerate(cfg.frequencies):
        c, s = np.cos(shift * w), np.sin(shift * w)
        i = 2 * k
        # acts on the (sin, cos) pair
        rot[i, i] = c
        rot[i, i + 1] = s
        rot[i + 1, i] = -s
        rot[i + 1, i + 1] = c
    return rot


def _one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise ValueError(f"one-hot index {index} out of range 0..{size - 1}")
    out = np.zeros(size)
    out[index] = 1.0
    return out


class BeatEncoder:
    """Rows of one-hot beat type + time embedding, through a linear map."""

    def __init__(self, d_model: int = D_MODEL, d_time: int = D_TIME,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.time_cfg = SinusoidalConfig(d_time)
        d_in = MAX_BEAT_TYPE + d_time
        self.weight = rng.standard_normal((d_in, d_model)) / np.sqrt(d_in)
        self.null_row = rng.standard_normal(d_model) / np.sqrt(d_model)

    def __call__(self, grid: BeatGrid | None) -> np.ndarray:
        if grid is None or not grid.entries:
            return self.null_row[None, :]
        rows = np.stack(
            [
                np.concatenate(
                    [
                        _one_hot(e.beat_type - 1, MAX_BEAT_TYPE),
                        time_embedding(e.time_seconds, self.time_cfg),
                    ]
                )
                for e in grid.entries
            ]
        )
        return rows @ self.weight

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"beat_encoder.weight": self.weight, "beat_encoder.null_row": self.null_row}


class ChordEncoder:
    """Rows of pitch-embedded root + one-hot type/inversion + time embedding."""

    def __init__(self, d_model: int = D_MODEL, d_pitch: int = D_PITCH, d_time: int = D_TIME,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.pitch_cfg = SinusoidalConfig(d_pitch)
        self.time_cfg = SinusoidalConfig(d_time)
        d_in = d_pitch + len(notation.CHORD_TYPES) + 2 + d_time
        self.weight = rng.standard_normal((d_in, d_model)) / np.sqrt(d_in)
        self.null_row = rng.standard_normal(d_model) / np.sqrt(d_model)

    def __call__(self, seq: ChordSequence | None) -> np.ndarray:
        if seq is None or not seq.entries:
            return self.null_row[None, :]
        type_index = {t: i for i, t in enumerate(notation.CHORD_TYPES)}
        rows = np.stack(
            [
                np.concatenate(
                    [
                        pitch_embedding(e.root, self.pitch_cfg),
                        _one_hot(type_index[e.ctype], len(notation.CHORD_TYPES)),
                        _one_hot(int(e.inverted), 2),
                        time_embedding(e.time_seconds, self.time_cfg),
                    ]
                )
                for e in seq.entries
            ]
        )
        return rows @ self.weight

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"chord_encoder.weight": self.weight, "chord_encoder.null_row": self.null_row}


@dataclass(frozen=True)
class ConditionBundle:
    """Encoded text/beat/chord conditions, always with at least one row each."""

    text_emb: np.ndarray   # [L_text, d_model]
    beat_emb: np.ndarray   # [L_beats, d_model]
    chord_emb: np.ndarray  # [L_chords, d_model]


class ConditionEncoders:
    """Owns the beat/chord encoders plus the null rows for absent conditions."""

    def __init__(self, d_model: int = D_MODEL, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.d_model = d_model
        self.beat_encoder = BeatEncoder(d_model, rng=rng)
        self.chord_encoder = ChordEncoder(d_model, rng=rng)
        self.text_null_row = rng.standard_normal(d_model) / np.sqrt(d_model)

    def bundle(self, text_emb: np.ndarray | None = None, beats: BeatGrid | None = None,
               chords: ChordSequence | None = None) -> ConditionBundle:
        if text_emb is None or len(text_emb) == 0:
            text = self.text_null_row[None, :]
        else:
            text = np.asarray(text_emb, dtype=np.float64)
            if text.ndim != 2 or text.shape[1] != self.d_model:
                raise ValueError(f"text embedding must be [L, {self.d_model}]")
        return ConditionBundle(text, self.beat_encoder(beats), self.chord_encoder(chords))

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {"text_null_row": self.text_null_row}
        out.update(self.beat_encoder.params)
        out.update(self.chord_encoder.params)
        return out


class MultiHeadAttention:
    """Standard multi-head scaled-dot-product cross-attention."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.d_model = d_model
        self.n_heads = n_heads
        scale = 1.0 / np.sqrt(d_model)
        self.w_q = rng.standard_normal((d_model, d_model)) * scale
        self.w_k = rng.standard_normal((d_model, d_model)) * scale
        self.w_v = rng.standard_normal((d_model, d_model)) * scale
        self.w_o = rng.standard_normal((d_model, d_model)) * scale

    def __call__(self, query: np.ndarray, keyvalue: np.ndarray,
                 return_weights: bool = False):
        if query.shape[1] != self.d_model or keyvalue.shape[1] != self.d_model:
            raise ValueError(f"inputs must have {self.d_model} columns")
        d_head = self.d_model // self.n_heads
        q = (query @ self.w_q).reshape(len(query), self.n_heads, d_head)
        k = (keyvalue @ self.w_k).reshape(len(keyvalue), self.n_heads, d_head)
        v = (keyvalue @ self.w_v).reshape(len(keyvalue), self.n_heads, d_head)
        logits = np.einsum("qhd,khd->hqk", q, k) / np.sqrt(d_head)
        logits -= logits.max(axis=-1, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=-1, keepdims=True)
        mixed = np.einsum("hqk,khd->qhd", weights, v).reshape(len(query), self.d_model)
        out = mixed @ self.w_o
        if return_weights:
            return out, weights
        return out

    def params(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.w_q": self.w_q,
            f"{prefix}.w_k": self.w_k,
            f"{prefix}.w_v": self.w_v,
            f"{prefix}.w_o": self.w_o,
        }


class CrossAttentionConditioner:
    """Chained residual cross-attention: text, then beats, then chords.

    Rhythm is conditioned before harmony; each block is
    ``x + MHA(Q=x, K/V=condition)``, so zeroed value projections leave the
    input untouched. Output shape always equals the input shape.
    """

    def __init__(self, d_model: int = D_MODEL, n_heads: int = 4,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.d_model = d_model
        self.attn_text = MultiHeadAttention(d_model, n_heads, rng)
        self.attn_beats = MultiHeadAttention(d_model, n_heads, rng)
        self.attn_chords = MultiHeadAttention(d_model, n_heads, rng)

    def __call__(self, u: np.ndarray, bundle: ConditionBundle,
                 return_weights: bool = False):
        if u.ndim != 2 or u.shape[1] != self.d_model:
            raise ValueError(f"latent rows must have {self.d_model} columns")
        out_t, w_t = self.attn_text(u, bundle.text_emb, return_weights=True)
        a = u + out_t
        out_b, w_b = self.attn_beats(a, bundle.beat_emb, return_weights=True)
        a = a + out_b
        out_c, w_c = self.attn_chords(a, bundle.chord_emb, return_weights=True)
        a = a + out_c
        if return_weights:
            return a, (w_t, w_b, w_c)
        return a

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.attn_text.params("attn_text"))
        out.update(self.attn_beats.params("attn_beats"))
        out.update(self.attn_chords.params("attn_chords"))
        return out


# ---------------------------------------------------------------------------
# Checkpoint format: one JSON header line, then raw little-endian float32 data


def save_weights(path, arrays: dict[str, np.ndarray]) -> None:
    names = list(arrays)
    header = {
        "names": names,
        "shapes": {name: list(arrays[name].shape) for name in names},
        "dtype": "<f4",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f4").tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    out = {}
    offset = 0
    for name in header["names"]:
        shape = tuple(header["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        out[name] = arr.reshape(shape).astype(np.float64)
        offset += count * 4
    return out
