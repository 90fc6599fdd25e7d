"""Training objectives: weighted LM cross-entropy and the HiFi-GAN generator/discriminator losses.

Expectations are finite-sample means over whatever batch is supplied.
Discriminator outputs are consumed as recorded traces rather than computed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ttsforge.config import load_flat_config
from ttsforge.dsp import MelSpectrogram


@dataclass(frozen=True)
class TokenBatch:
    logits: np.ndarray  # (steps, V)
    targets: np.ndarray  # (steps,)

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim == 1:
            logits = logits[None, :]
        targets = np.asarray(self.targets, dtype=np.int64).ravel()
        if logits.ndim != 2 or logits.shape[0] == 0 or logits.shape[1] == 0:
            raise ValueError("token batch must have at least one step and a non-empty vocabulary")
        if logits.shape[0] != targets.shape[0]:
            raise ValueError(f"{logits.shape[0]} logit rows but {targets.shape[0]} targets")
        bad = np.flatnonzero((targets < 0) | (targets >= logits.shape[1]))
        if bad.size:
            raise ValueError(f"target {int(targets[bad[0]])} at step {int(bad[0])} outside [0, {logits.shape[1]})")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "targets", targets)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.01
    beta: float = 1.0
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_fm", "lambda_mel"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    @classmethod
    def from_file(cls, path: str | Path) -> "LossWeights":
        return cls(**load_flat_config(path, cls))


@dataclass(frozen=True)
class DiscriminatorTrace:
    """Recorded outputs of one sub-discriminator.

    Feature layers may hold a whole batch flattened together; the per-layer
    division by element count then averages the layer term over the batch.
    """

    real_scores: np.ndarray
    fake_scores: np.ndarray
    real_features: tuple[np.ndarray, ...] = ()
    fake_features: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        real = np.asarray(self.real_scores, dtype=np.float64).ravel()
        fake = np.asarray(self.fake_scores, dtype=np.float64).ravel()
        rf = tuple(np.asarray(f, dtype=np.float64).ravel() for f in self.real_features)
        ff = tuple(np.asarray(f, dtype=np.float64).ravel() for f in self.fake_features)
        if len(rf) != len(ff):
            raise ValueError(f"{len(rf)} real feature layers but {len(ff)} fake")
        object.__setattr__(self, "real_scores", real)
        object.__setattr__(self, "fake_scores", fake)
        object.__setattr__(self, "real_features", rf)
        object.__setattr__(self, "fake_features", ff)


# ---------------------------------------------------------------------------
# Language-model losses
# ---------------------------------------------------------------------------


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(batch: TokenBatch) -> float:
    """Mean over steps of -log softmax(logits)[target]."""
    logp = _log_softmax(batch.logits)
    # "+ 0.0" folds a -0.0 from an exact-zero mean into 0.0
    return float(-logp[np.arange(len(batch.targets)), batch.targets].mean()) + 0.0


def cross_entropy_grad(batch: TokenBatch) -> np.ndarray:
    """d cross_entropy / d logits: (softmax - onehot) / steps."""
    p = np.exp(_log_softmax(batch.logits))
    p[np.arange(len(batch.targets)), batch.targets] -= 1.0
    return p / len(batch.targets)


def lm_total(text, audio, w: LossWeights | None = None) -> tuple[float, float, float]:
    """(l_text, l_audio, alpha*l_text + beta*l_audio).

    ``text`` and ``audio`` are token batches or already-computed loss values.
    """
    w = w or LossWeights()
    l_text = cross_entropy(text) if isinstance(text, TokenBatch) else float(text)
    l_audio = cross_entropy(audio) if isinstance(audio, TokenBatch) else float(audio)
    return l_text, l_audio, w.alpha * l_text + w.beta * l_audio


# ---------------------------------------------------------------------------
# Vocoder losses
# ---------------------------------------------------------------------------


def _scores(x: np.ndarray, name: str) -> np.ndarray:
    if x.size == 0:
        raise ValueError(f"no {name} scores")
    return x


def adv_d(trace: DiscriminatorTrace) -> float:
    """Least-squares discriminator loss: mean (D(x) - 1)^2 + mean D(G(s))^2."""
    real = _scores(trace.real_scores, "real")
    fake = _scores(trace.fake_scores, "fake")
    return float(np.mean((real - 1.0) ** 2) + np.mean(fake ** 2))


def adv_g(trace: DiscriminatorTrace) -> float:
    fake = _scores(trace.fake_scores, "fake")
    return float(np.mean((fake - 1.0) ** 2))


def _mel_frames(m) -> np.ndarray:
    return m.frames if isinstance(m, MelSpectrogram) else np.asarray(m, dtype=np.float64)


def mel_loss(real_mel, fake_mel) -> float:
    """Mean absolute difference between two spectrograms of identical shape."""
    real, fake = _mel_frames(real_mel), _mel_frames(fake_mel)
    if real.shape != fake.shape:
        raise ValueError(f"mel shape mismatch: {real.shape} vs {fake.shape}")
    if isinstance(real_mel, MelSpectrogram) and isinstance(fake_mel, MelSpectrogram):
        if real_mel.config != fake_mel.config:
            raise ValueError("mel spectrograms were computed with different configs")
    return float(np.mean(np.abs(real - fake)))


def mel_loss_grad(real_mel, fake_mel) -> np.ndarray:
    """Subgradient of ``mel_loss`` with respect to the generated spectrogram."""
    real, fake = _mel_frames(real_mel), _mel_frames(fake_mel)
    return np.sign(fake - real) / fake.size


def fm_loss(trace: DiscriminatorTrace) -> float:
    """Sum over layers of the L1 feature distance divided by that layer's feature count."""
    total = 0.0
    for i, (r, f) in enumerate(zip(trace.real_features, trace.fake_features)):
        if r.shape != f.shape:
            raise ValueError(f"feature shape mismatch at layer {i}: {r.shape} vs {f.shape}")
        if r.size == 0:
            raise ValueError(f"layer {i} has no features")
        total += float(np.abs(r - f).sum()) / r.size
    return total


def hifi_generator_total(
    traces: Sequence[DiscriminatorTrace], real_mel, fake_mel, w: LossWeights | None = None
) -> float:
    w = w or LossWeights()
    if len(traces) == 0:
        raise ValueError("need at least one sub-discriminator trace")
    per_disc = sum(adv_g(t) + w.lambda_fm * fm_loss(t) for t in traces)
    return per_disc + w.lambda_mel * mel_loss(real_mel, fake_mel)


def hifi_discriminator_total(traces: Sequence[DiscriminatorTrace]) -> float:
    if len(traces) == 0:
        raise ValueError("need at least one sub-discriminator trace")
    return sum(adv_d(t) for t in traces)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    fn: Callable[[np.ndarray], float],
    analytic: np.ndarray | Callable[[np.ndarray], np.ndarray],
    point,
    eps: float = 1e-4,
) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.array(point, dtype=np.float64)
    g = np.asarray(analytic(x.copy()) if callable(analytic) else analytic, dtype=np.float64)
    if g.shape != x.shape:
        raise ValueError(f"gradient shape {g.shape} != point shape {x.shape}")
    worst = 0.0
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = fn(x)
        flat[i] = orig - eps
        down = fn(x)
        flat[i] = orig
        if not (math.isfinite(up) and math.isfinite(down)):
            raise FloatingPointError(f"non-finite function value near coordinate {i}")
        numeric = (up - down) / (2.0 * eps)
        err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]))
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Trace fixtures
# ---------------------------------------------------------------------------


def trace_from_json(obj: dict, line: int = 0) -> DiscriminatorTrace:
    try:
        return DiscriminatorTrace(
            obj["real"], obj["fake"],
            tuple(obj.get("features_real", ())), tuple(obj.get("features_fake", ())),
        )
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]} at line {line}") from None
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{exc} at line {line}") from None


def trace_to_json(trace: DiscriminatorTrace) -> dict:
    return {
        "real": trace.real_scores.tolist(),
        "fake": trace.fake_scores.tolist(),
        "features_real": [f.tolist() for f in trace.real_features],
        "features_fake": [f.tolist() for f in trace.fake_features],
    }


def read_traces(path: str | Path) -> list[DiscriminatorTrace]:
    traces = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed JSON ({exc.msg}) at line {lineno}") from None
        if not isinstance(obj, dict):
            raise ValueError(f"expected a JSON object at line {lineno}")
        traces.append(trace_from_json(obj, lineno))
    return traces


def write_traces(traces: Sequence[DiscriminatorTrace], path: str | Path) -> None:
    Path(path).write_text(
        "".join(json.dumps(trace_to_json(t)) + "\n" for t in traces), encoding="utf-8"
    )
