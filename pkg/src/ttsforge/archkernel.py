"""Toy-scale conditioning and sampling math of the synthesis model.

Matrices are 2-D float64 numpy arrays, rows are time steps. Nothing here is
learned: projections, latents and codebooks are supplied by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class AttentionWeights:
    w_q: np.ndarray  # (heads, d, d_head)
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray  # (heads * d_head, d)

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v"):
            w = np.asarray(getattr(self, name), dtype=np.float64)
            if w.ndim != 3:
                raise ValueError(f"{name} must have shape (heads, d, d_head)")
            object.__setattr__(self, name, w)
        object.__setattr__(self, "w_o", np.asarray(self.w_o, dtype=np.float64))
        heads, d, d_head = self.w_q.shape
        if heads < 1 or d % heads or d_head != d // heads:
            raise ValueError(f"model dim {d} must split evenly into {heads} heads of size {d_head}")
        if self.w_k.shape != self.w_q.shape or self.w_v.shape != self.w_q.shape:
            raise ValueError("w_q, w_k and w_v must share a shape")
        if self.w_o.shape != (heads * d_head, d):
            raise ValueError(f"w_o must have shape {(heads * d_head, d)}")

    @property
    def heads(self) -> int:
        return self.w_q.shape[0]

    @property
    def d(self) -> int:
        return self.w_q.shape[1]

    @property
    def d_head(self) -> int:
        return self.w_q.shape[2]

    @classmethod
    def identity(cls, d: int, heads: int = 1) -> "AttentionWeights":
        """Head h sees columns [h*d_head, (h+1)*d_head) and the output projection is I."""
        if d % heads:
            raise ValueError(f"d={d} not divisible by heads={heads}")
        dh = d // heads
        eye = np.eye(d)
        w = np.stack([eye[:, h * dh:(h + 1) * dh] for h in range(heads)])
        return cls(w, w.copy(), w.copy(), np.eye(d))

    @classmethod
    def random(cls, d: int, heads: int, rng: np.random.Generator, scale: float = 1.0) -> "AttentionWeights":
        dh = d // heads
        if dh * heads != d:
            raise ValueError(f"d={d} not divisible by heads={heads}")
        s = scale / np.sqrt(d)
        draw = lambda *shape: rng.normal(0.0, s, size=shape)  # noqa: E731
        return cls(draw(heads, d, dh), draw(heads, d, dh), draw(heads, d, dh), draw(d, d))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def attention(q_in, k_in, v_in, weights: AttentionWeights, return_probs: bool = False):
    """Multi-head scaled dot-product attention, scores scaled by sqrt(d_head).

    Returns the (rows(q_in), d) output, plus the (heads, rows(q_in), rows(k_in))
    attention probabilities when ``return_probs`` is set.
    """
    q_in = as_matrix(q_in, "queries")
    k_in = as_matrix(k_in, "keys")
    v_in = as_matrix(v_in, "values")
    d = weights.d
    for name, m in (("queries", q_in), ("keys", k_in), ("values", v_in)):
        if m.shape[1] != d:
            raise ValueError(f"{name} have {m.shape[1]} columns, weights expect {d}")
    if k_in.shape[0] != v_in.shape[0]:
        raise ValueError("keys and values must have the same number of rows")

    q = np.einsum("ld,hde->hle", q_in, weights.w_q)
    k = np.einsum("ld,hde->hle", k_in, weights.w_k)
    v = np.einsum("ld,hde->hle", v_in, weights.w_v)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(weights.d_head)
    probs = softmax(scores, axis=-1)
    heads = probs @ v  # (h, Lq, dh)
    concat = heads.transpose(1, 0, 2).reshape(q_in.shape[0], -1)
    out = concat @ weights.w_o
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("attention produced non-finite values")
    return (out, probs) if return_probs else out


def perceiver_resample(inputs, latents, weights: AttentionWeights) -> np.ndarray:
    """Cross-attend fixed latents (queries) over a variable-length input; output has P rows."""
    return attention(latents, inputs, inputs, weights)


CONDITIONING_LAYERS = 6


def random_conditioning_layers(d: int, heads: int, rng: np.random.Generator,
                               n: int = CONDITIONING_LAYERS) -> list[AttentionWeights]:
    return [AttentionWeights.random(d, heads, rng) for _ in range(n)]


def conditioning_encoder(features, layers: list[AttentionWeights]) -> np.ndarray:
    """Stack of self-attention layers over a speaker representation.

    No residuals, norms or feed-forward blocks; each layer is bare attention.
    """
    x = as_matrix(features, "features")
    for w in layers:
        x = attention(x, x, x, w)
    return x


# ---------------------------------------------------------------------------
# Discrete codes and sequence layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    entries: np.ndarray  # (C, d)

    def __post_init__(self):
        e = as_matrix(self.entries, "codebook")
        if len(np.unique(e, axis=0)) != e.shape[0]:
            raise ValueError("codebook rows must be pairwise distinct")
        object.__setattr__(self, "entries", e)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def vq_assign(frames, codebook: Codebook) -> list[int]:
    """Nearest code per frame by squared Euclidean distance; ties go to the lower index."""
    f = as_matrix(frames, "frames")
    if f.shape[1] != codebook.entries.shape[1]:
        raise ValueError(
            f"frame dim {f.shape[1]} != codebook dim {codebook.entries.shape[1]}"
        )
    diff = f[:, None, :] - codebook.entries[None, :, :]
    dist = np.einsum("mcd,mcd->mc", diff, diff)
    return [int(i) for i in np.argmin(dist, axis=1)]


@dataclass(frozen=True)
class LLMInput:
    matrix: np.ndarray
    offsets: tuple[int, ...]  # start row of speaker, text and (if present) audio segments
    lengths: tuple[int, ...]

    def segment(self, i: int) -> np.ndarray:
        return self.matrix[self.offsets[i]:self.offsets[i] + self.lengths[i]]

    @property
    def speaker(self) -> np.ndarray:
        return self.segment(0)

    @property
    def text(self) -> np.ndarray:
        return self.segment(1)

    @property
    def audio(self) -> Optional[np.ndarray]:
        return self.segment(2) if len(self.lengths) > 2 else None


def build_llm_input(s_p, t_e, y_e=None) -> LLMInput:
    """Row-wise concatenation speaker ⊕ text ⊕ audio; omit ``y_e`` for the inference layout."""
    parts = [as_matrix(s_p, "speaker embeddings"), as_matrix(t_e, "text embeddings")]
    if y_e is not None:
        parts.append(as_matrix(y_e, "audio embeddings"))
    d = parts[0].shape[1]
    if any(p.shape[1] != d for p in parts):
        raise ValueError(f"column mismatch: {[p.shape[1] for p in parts]}")
    lengths = tuple(p.shape[0] for p in parts)
    offsets = tuple(int(x) for x in np.cumsum((0,) + lengths[:-1]))
    return LLMInput(np.concatenate(parts, axis=0), offsets, lengths)


def resize_rows(x, rows: int) -> np.ndarray:
    """Linear interpolation along the time axis with endpoints aligned.

    A single output row takes the midpoint of the input.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot resize an empty sequence")
    if rows == n:
        return x.copy()
    if rows == 1:
        pos = np.array([(n - 1) / 2.0])
    else:
        pos = np.arange(rows) * ((n - 1) / (rows - 1))
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = (pos - lo)[:, None]
    return x[lo] * (1.0 - frac) + x[hi] * frac


def hifi_combine(h_y, speaker) -> np.ndarray:
    """Resize the speaker rows to match ``h_y`` and add elementwise."""
    h_y = as_matrix(h_y, "h_y")
    speaker = np.asarray(speaker, dtype=np.float64)
    if speaker.ndim != 2 or speaker.shape[0] == 0:
        raise ValueError("speaker embedding must have at least one row")
    if speaker.shape[1] != h_y.shape[1]:
        raise ValueError(f"column mismatch: {h_y.shape[1]} vs {speaker.shape[1]}")
    return h_y + resize_rows(speaker, h_y.shape[0])


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.85
    top_k: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


# Generation settings compared in the short-text ablation.
DEFAULT_SAMPLING = SamplingConfig(temperature=0.85, top_k=50)
SHORT_TEXT_SAMPLING = SamplingConfig(temperature=1.0, top_k=2)


def token_probabilities(logits, cfg: SamplingConfig) -> np.ndarray:
    """Full-vocabulary distribution after top-k truncation and temperature scaling."""
    x = np.asarray(logits, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty logits")
    if not np.all(np.isfinite(x)):
        raise ValueError("logits must be finite")
    k = min(cfg.top_k, x.size)
    keep = np.argsort(-x, kind="stable")[:k]  # ties toward lower index
    probs = np.zeros_like(x)
    probs[keep] = softmax(x[keep] / cfg.temperature)
    return probs


def sample_token(logits, cfg: SamplingConfig, rng: Optional[np.random.Generator] = None) -> int:
    """Draw one token index. Consumes exactly one uniform from ``rng``.

    With no generator given, a fresh one seeded from ``cfg.seed`` is used, so
    repeated calls return the same token.
    """
    probs = token_probabilities(logits, cfg)
    rng = rng if rng is not None else cfg.rng()
    u = rng.random()
    if cfg.top_k == 1:
        return int(np.argmax(probs))
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    # u * total may land on the last edge through rounding
    idx = min(idx, probs.size - 1)
    while probs[idx] == 0.0:
        idx -= 1
    return idx


@dataclass(frozen=True)
class PromptPolicy:
    min_prompt_s: float = 1.0
    max_prompt_s: float = 6.0
    short_clip_fraction: float = 0.5

    def __post_init__(self):
        if not 0 < self.min_prompt_s < self.max_prompt_s:
            raise ValueError("need 0 < min_prompt_s < max_prompt_s")
        if not 0 < self.short_clip_fraction < 1:
            raise ValueError("short_clip_fraction must lie in (0, 1)")


def select_prompt_span(
    clip_duration_s: float,
    policy: PromptPolicy | None = None,
    rng: Optional[np.random.Generator] = None,
    seed: int = 0,
) -> tuple[float, float]:
    """Pick (start_s, length_s) of the speaker-prompt span inside a clip.

    Clips shorter than ``min_prompt_s`` use a fixed fraction of their length;
    longer ones draw a length uniformly from [min, min(max, duration)].
    """
    policy = policy or PromptPolicy()
    if not clip_duration_s > 0:
        raise ValueError("clip duration must be positive")
    rng = rng if rng is not None else np.random.Generator(np.random.PCG64(seed))
    if clip_duration_s < policy.min_prompt_s:
        length = policy.short_clip_fraction * clip_duration_s
    else:
        hi = min(policy.max_prompt_s, clip_duration_s)
        length = policy.min_prompt_s + (hi - policy.min_prompt_s) * rng.random()
    start = (clip_duration_s - length) * rng.random()
    return start, length
