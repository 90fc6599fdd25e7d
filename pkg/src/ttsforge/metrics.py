"""Objective TTS evaluation metrics and MOS aggregation."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from ttsforge.dsp import MelSpectrogram


@dataclass(frozen=True)
class EmbeddingSequence:
    vectors: np.ndarray  # (T, d)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise ValueError("an embedding sequence needs at least one vector of dimension >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding entries must be finite")
        object.__setattr__(self, "vectors", v)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class MetricReport:
    cer: Optional[float] = None
    secs: Optional[float] = None
    speech_bert: Optional[float] = None
    duration_equality: Optional[float] = None
    smos: Optional[float] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance (substitutions, deletions, insertions)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(hypothesis: str, reference: str, normalization: Optional[str] = "NFC") -> float:
    """Edit distance over Unicode scalar values divided by the reference length.

    Not clipped: insertions can push the value above 1. Pass
    ``normalization=None`` to compare the raw code points.
    """
    if normalization:
        hypothesis = unicodedata.normalize(normalization, hypothesis)
        reference = unicodedata.normalize(normalization, reference)
    if not reference:
        raise ValueError("CER needs a non-empty reference")
    return levenshtein(hypothesis, reference) / len(reference)


def duration_equality(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise ValueError(f"durations must be positive, got {a} and {b}")
    return 1.0 / max(a / b, b / a)


def secs(e_ref, e_syn) -> float:
    """Cosine similarity between two speaker embeddings."""
    x = np.asarray(e_ref, dtype=np.float64).ravel()
    y = np.asarray(e_syn, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def _unit_rows(seq: EmbeddingSequence, name: str) -> np.ndarray:
    norms = np.linalg.norm(seq.vectors, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"{name} vector at index {int(zero[0])} is zero")
    return seq.vectors / norms[:, None]


def speech_bert_score(gen, ref) -> float:
    """Mean over generated frames of the best cosine match among reference frames.

    Asymmetric: swapping the arguments generally changes the value.
    """
    gen = gen if isinstance(gen, EmbeddingSequence) else EmbeddingSequence(gen)
    ref = ref if isinstance(ref, EmbeddingSequence) else EmbeddingSequence(ref)
    if gen.d != ref.d:
        raise ValueError(f"dimension mismatch: {gen.d} vs {ref.d}")
    sims = _unit_rows(gen, "generated") @ _unit_rows(ref, "reference").T
    return float(np.clip(sims.max(axis=1), -1.0, 1.0).mean())


def baseline_speaker_embedding(mel: MelSpectrogram | np.ndarray) -> np.ndarray:
    """Per-bin mean followed by per-bin population std over time.

    A cheap stand-in for a neural speaker encoder; invariant to frame order.
    """
    frames = mel.frames if isinstance(mel, MelSpectrogram) else np.asarray(mel, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 2:
        raise ValueError("baseline speaker embedding needs at least 2 frames")
    # sorting fixes the summation order, making the result bit-identical under frame permutation
    frames = np.sort(frames, axis=0)
    return np.concatenate([frames.mean(axis=0), frames.std(axis=0)])


def aggregate_mos(ratings: Sequence[float]) -> float:
    if len(ratings) == 0:
        raise ValueError("no ratings to aggregate")
    for i, r in enumerate(ratings):
        if not 1.0 <= r <= 5.0:
            raise ValueError(f"rating {r} at index {i} is outside [1, 5]")
    return float(np.mean(np.asarray(ratings, dtype=np.float64)))
