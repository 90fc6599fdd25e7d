"""Deterministic synthetic fixture tree for offline demos and end-to-end tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ttsforge import corpus, dsp, losses
from ttsforge.config import dump_flat
from ttsforge.embfile import write_emb

SAMPLE_RATE = 16000
FRAME = 400  # 25 ms at 16 kHz, so silence frames align with the synthetic segments

# No vowel signs that compose under NFC, so character counts are stable.
_LETTERS = "কখগঘচছজঝটঠডতথদধনপফবভমযরলশসহঅআইউএ"
_SIGNS = "াি"

# (id, duration_s, chars, silent frames out of duration/25ms)
CANONICAL = (
    ("r1-short", 0.4, 12, 0),
    ("r2-long", 11.5, 150, 0),
    ("r3-text", 10.0, 201, 0),
    ("r4-silent", 5.0, 100, 80),
    ("r5-slow", 6.0, 30, 0),
    ("r6-pass", 5.0, 100, 20),
)


def bangla_text(rng: np.random.Generator, n_chars: int) -> str:
    """Random words of length 2-6 joined by spaces, ending with a danda, exactly ``n_chars`` long."""
    out = []
    while sum(len(w) for w in out) + len(out) < n_chars:
        word = "".join(
            rng.choice(list(_LETTERS)) + (rng.choice(list(_SIGNS)) if rng.random() < 0.3 else "")
            for _ in range(int(rng.integers(1, 4)))
        )
        out.append(word)
    text = " ".join(out)[: n_chars - 1].rstrip() + "।"
    while len(text) < n_chars:
        text = text[:-1] + rng.choice(list(_LETTERS)) + "।"
    assert corpus.char_count(text) == n_chars
    return text


def speech_like(rng: np.random.Generator, duration_s: float, silent_frames: int = 0) -> dsp.AudioClip:
    """Harmonic tone with tail silence (faint noise) covering ``silent_frames`` 25 ms frames."""
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    f0 = float(rng.uniform(110, 240))
    x = sum(0.3 / h * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) for h in (1, 2, 3))
    x = x + 0.01 * rng.normal(size=n)
    if silent_frames:
        quiet = silent_frames * FRAME
        x[n - quiet:] = 2e-4 * rng.normal(size=quiet)
    return dsp.AudioClip(np.clip(x, -1.0, 1.0), SAMPLE_RATE)


def canonical_records(rng: np.random.Generator, audio_dir: str = "audio") -> list[tuple[corpus.CorpusRecord, dsp.AudioClip]]:
    out = []
    for rid, duration, chars, silent in CANONICAL:
        clip = speech_like(rng, duration, silent)
        rec = corpus.CorpusRecord(
            id=rid, audio_path=f"{audio_dir}/{rid}.wav", text=bangla_text(rng, chars),
            speaker_id=f"spk{int(rng.integers(1, 5))}",
        )
        out.append((rec, clip))
    return out


def _write_jsonl(path: Path, rows) -> None:
    path.write_text("".join(json.dumps(r, ensure_ascii=False, separators=(", ", ": ")) + "\n" for r in rows), encoding="utf-8")


def make_fixtures(out_dir: str | Path, seed: int = 0) -> list[Path]:
    """Write the fixture tree and return the created files in creation order."""
    rng = np.random.default_rng(seed)
    root = Path(out_dir)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    (root / "emb").mkdir(exist_ok=True)
    written: list[Path] = []

    def keep(p: Path) -> Path:
        written.append(p)
        return p

    # corpus filtering: the six-record decision table
    records = canonical_records(rng)
    for rec, clip in records:
        dsp.write_wav(clip, keep(root / rec.audio_path))
    corpus.write_manifest([r for r, _ in records], keep(root / "manifest.jsonl"))
    keep(root / "policy.cfg").write_text(dump_flat(corpus.FilterPolicy()), encoding="utf-8")

    # evaluation pairs
    ref_text = bangla_text(rng, 40)
    hyp_text = ref_text[:10] + "ক" + ref_text[11:]
    short = speech_like(rng, 2.0)
    long = speech_like(rng, 4.0)
    same = speech_like(rng, 3.0)
    for name, clip in (("gen_2s", short), ("ref_4s", long), ("same_3s", same)):
        dsp.write_wav(clip, keep(root / "audio" / f"{name}.wav"))
    seq = rng.normal(size=(12, 16))
    write_emb(seq, keep(root / "emb" / "seq.emb"))
    write_emb(seq[rng.permutation(12)][:7] + 0.1 * rng.normal(size=(7, 16)), keep(root / "emb" / "seq_gen.emb"))
    spk = rng.normal(size=(1, 32))
    write_emb(spk, keep(root / "emb" / "spk_ref.emb"))
    write_emb(spk + 0.3 * rng.normal(size=(1, 32)), keep(root / "emb" / "spk_gen.emb"))
    pairs = [
        {"id": "identical-text", "hypothesis": ref_text, "reference": ref_text,
         "gen_audio": "audio/same_3s.wav", "ref_audio": "audio/same_3s.wav"},
        {"id": "half-duration", "hypothesis": hyp_text, "reference": ref_text,
         "gen_audio": "audio/gen_2s.wav", "ref_audio": "audio/ref_4s.wav"},
        {"id": "same-embeddings", "gen_emb": "emb/seq.emb", "ref_emb": "emb/seq.emb",
         "gen_speaker": "emb/spk_ref.emb", "ref_speaker": "emb/spk_ref.emb"},
        {"id": "file-embeddings", "hypothesis": hyp_text, "reference": ref_text,
         "gen_emb": "emb/seq_gen.emb", "ref_emb": "emb/seq.emb",
         "gen_speaker": "emb/spk_gen.emb", "ref_speaker": "emb/spk_ref.emb",
         "gen_duration": 3.1, "ref_duration": 2.9, "ratings": [4.5, 3.5, 4.0, 5.0]},
    ]
    _write_jsonl(keep(root / "pairs.jsonl"), pairs)

    # discriminator traces: K sub-discriminators, three feature layers each
    traces = []
    for _ in range(3):
        sizes = (2, 5, 7)
        real_f = tuple(rng.normal(size=n) for n in sizes)
        traces.append(losses.DiscriminatorTrace(
            rng.uniform(0.5, 1.0, size=4), rng.uniform(0.0, 0.5, size=4),
            real_f, tuple(f + 0.1 * rng.normal(size=f.shape) for f in real_f),
        ))
    losses.write_traces(traces, keep(root / "traces.jsonl"))
    keep(root / "weights.cfg").write_text(dump_flat(losses.LossWeights()), encoding="utf-8")
    mel_real = rng.normal(size=(20, 80))
    write_emb(mel_real, keep(root / "emb" / "mel_real.emb"))
    write_emb(mel_real + 0.05 * rng.normal(size=mel_real.shape), keep(root / "emb" / "mel_fake.emb"))
    return written
