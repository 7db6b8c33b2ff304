"""Fréchet distance and KL divergence over ingested embedding/probability sets.

Embedding-model inference is out of scope; these operate on files produced
elsewhere. The same Fréchet formula serves FD and FAD (only the embedding
source differs).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KL_CLAMP = 1e-12


@dataclass(frozen=True)
class EmbeddingSet:
    """Rows of embedding vectors from one audio corpus."""

    vectors: np.ndarray  # [n, d]
    source_tag: str = ""

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("embeddings must be a 2-D [n, d] matrix")
        if vectors.shape[0] < 2:
            raise ValueError("need at least 2 embedding rows for Frechet statistics")
        if not np.isfinite(vectors).all():
            raise ValueError("embeddings must be finite")
        object.__setattr__(self, "vectors", vectors)


@dataclass(frozen=True)
class ProbabilitySet:
    """Per-sample class-probability rows keyed by sample id."""

    ids: tuple[str, ...]
    rows: np.ndarray  # [n, k]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.ids):
            raise ValueError("rows must be [n, k] with one row per id")
        if (rows < 0).any():
            raise ValueError("probabilities must be non-negative")
        if not np.allclose(rows.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("each probability row must sum to 1")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "rows", rows)


def _sym_sqrt(mat: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix, eigenvalues clamped at 0."""
    sym = (mat + mat.T) / 2.0
    evals, evecs = np.linalg.eigh(sym)
    return (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T


def frechet_distance(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    Covariances use 1/(n-1) normalization. The product square root is
    computed via the symmetrized form sqrt(S_a)^T S_b sqrt(S_a), whose
    eigenvalues are clamped at zero to survive near-singular desk-scale
    covariances.
    """
    if a.vectors.shape[1] != b.vectors.shape[1]:
        raise ValueError("embedding dimensions differ")
    mu_a, mu_b = a.vectors.mean(axis=0), b.vectors.mean(axis=0)
    cov_a = np.cov(a.vectors, rowvar=False, ddof=1)
    cov_b = np.cov(b.vectors, rowvar=False, ddof=1)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)
    root_a = _sym_sqrt(cov_a)
    inner = _sym_sqrt(root_a @ cov_b @ root_a)
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(inner))
    if not np.isfinite(value):
        raise ValueError("Frechet distance is not finite")
    return max(value, 0.0)


def kl_divergence(gen: ProbabilitySet, ref: ProbabilitySet,
                  pairing: dict[str, str] | None = None) -> float:
    """Mean over paired rows of sum_i p_i log(p_i / max(q_i, 1e-12)).

    ``p`` is the reference row and ``q`` the generated row. Rows pair by
    equal id unless ``pairing`` maps generated ids to reference ids.
    """
    ref_index = {sid: i for i, sid in enumerate(ref.ids)}
    if gen.rows.shape[1] != ref.rows.shape[1]:
        raise ValueError("probability row widths differ")
    total = 0.0
    for i, gid in enumerate(gen.ids):
        rid = pairing.get(gid, gid) if pairing else gid
        if rid not in ref_index:
            raise ValueError(f"no reference row paired with generated id {gid!r}")
        p = ref.rows[ref_index[rid]]
        q = np.maximum(gen.rows[i], KL_CLAMP)
        mask = p > 0
        total += float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    if not gen.ids:
        raise ValueError("no pairs to average over")
    return total / len(gen.ids)


# ---------------------------------------------------------------------------
# File formats


def write_embeddings(path, emb: EmbeddingSet) -> None:
    """Raw little-endian float32 rows plus a ``<path>.json`` sidecar."""
    path = Path(path)
    vectors = emb.vectors.astype("<f4")
    path.write_bytes(vectors.tobytes())
    sidecar = {"d": int(vectors.shape[1]), "n": int(vectors.shape[0]), "source_tag": emb.source_tag}
    Path(str(path) + ".json").write_text(json.dumps(sidecar), encoding="utf-8")


def read_embeddings(path) -> EmbeddingSet:
    """Read raw float32 rows (with JSON sidecar) or a CSV with a header row."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        vectors = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return EmbeddingSet(vectors, source_tag=path.stem)
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    vectors = raw.reshape(sidecar["n"], sidecar["d"]).astype(np.float64)
    return EmbeddingSet(vectors, source_tag=sidecar.get("source_tag", path.stem))


def write_probabilities(path, probs: ProbabilitySet) -> None:
    """CSV with header ``id,c0,c1,...`` and one row per sample id."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"c{i}" for i in range(probs.rows.shape[1])])
        for sid, row in zip(probs.ids, probs.rows):
            writer.writerow([sid] + [repr(float(v)) for v in row])


def read_probabilities(path) -> ProbabilitySet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "id":
            raise ValueError("probability CSV must start with an 'id' header column")
        ids, rows = [], []
        for record in reader:
            ids.append(record[0])
            rows.append([float(v) for v in record[1:]])
    return ProbabilitySet(tuple(ids), np.array(rows))
