"""Batch evaluation of hypothesis/reference pairs described in a JSONL file.

Pair keys (all optional except ``id``):
    hypothesis, reference       transcripts for CER
    gen_audio, ref_audio        WAV paths (durations, baseline embeddings)
    gen_duration, ref_duration  seconds, override the audio-derived duration
    gen_emb, ref_emb            EMB1 frame sequences for SpeechBERTScore
    gen_speaker, ref_speaker    EMB1 speaker embeddings for SECS (rows mean-pooled)
    ratings                     listener scores for MOS
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Optional

import numpy as np

from ttsforge import dsp, metrics
from ttsforge.embfile import read_emb

METRICS = ("cer", "secs", "sbs", "de", "mos")
_REPORT_KEYS = {"cer": "cer", "secs": "secs", "sbs": "speech_bert", "de": "duration_equality", "mos": "smos"}

_STR_KEYS = ("hypothesis", "reference", "gen_audio", "ref_audio", "gen_emb", "ref_emb", "gen_speaker", "ref_speaker")
_NUM_KEYS = ("gen_duration", "ref_duration")


class PairSchemaError(ValueError):
    pass


def parse_metric_list(spec: str) -> list[str]:
    names = [m.strip() for m in spec.split(",") if m.strip()]
    unknown = [m for m in names if m not in METRICS]
    if unknown:
        raise ValueError(f"unknown metric(s) {', '.join(unknown)}; choose from {', '.join(METRICS)}")
    if not names:
        raise ValueError("no metrics requested")
    return names


def read_pairs(path: str | Path) -> list[dict]:
    pairs = []
    seen = set()
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise PairSchemaError(f"malformed JSON ({exc.msg}) at line {lineno}") from None
        if not isinstance(obj, dict):
            raise PairSchemaError(f"expected a JSON object at line {lineno}")
        if not isinstance(obj.get("id"), str):
            raise PairSchemaError(f"missing field id at line {lineno}")
        if obj["id"] in seen:
            raise PairSchemaError(f"duplicate id {obj['id']!r} at line {lineno}")
        seen.add(obj["id"])
        for key in _STR_KEYS:
            if key in obj and not isinstance(obj[key], str):
                raise PairSchemaError(f"field {key} must be a string at line {lineno}")
        for key in _NUM_KEYS:
            if key in obj and (isinstance(obj[key], bool) or not isinstance(obj[key], (int, float))):
                raise PairSchemaError(f"field {key} must be a number at line {lineno}")
        if "ratings" in obj and not (
            isinstance(obj["ratings"], list)
            and all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in obj["ratings"])
        ):
            raise PairSchemaError(f"field ratings must be a list of numbers at line {lineno}")
        pairs.append(obj)
    return pairs


class _PairInputs:
    def __init__(self, pair: dict, base_dir: Path, mel_cfg: dsp.MelConfig):
        self.pair = pair
        self.base_dir = base_dir
        self.mel_cfg = mel_cfg
        self._clips: dict[str, dsp.AudioClip] = {}

    def path(self, key: str) -> Path:
        p = Path(self.pair[key])
        return p if p.is_absolute() else self.base_dir / p

    def clip(self, side: str) -> Optional[dsp.AudioClip]:
        key = f"{side}_audio"
        if key not in self.pair:
            return None
        if key not in self._clips:
            self._clips[key] = dsp.read_wav(self.path(key))
        return self._clips[key]

    def duration(self, side: str) -> Optional[float]:
        if f"{side}_duration" in self.pair:
            return float(self.pair[f"{side}_duration"])
        clip = self.clip(side)
        return None if clip is None else clip.duration_s

    def mel(self, side: str) -> Optional[dsp.MelSpectrogram]:
        clip = self.clip(side)
        if clip is None:
            return None
        cfg = self.mel_cfg
        if cfg.sample_rate != clip.sample_rate:
            cfg = dataclasses.replace(cfg, sample_rate=clip.sample_rate)
        return dsp.mel_spectrogram(clip, cfg)

    def frames(self, side: str) -> Optional[np.ndarray]:
        if f"{side}_emb" in self.pair:
            return read_emb(self.path(f"{side}_emb"))
        mel = self.mel(side)
        return None if mel is None else mel.frames

    def speaker(self, side: str) -> Optional[np.ndarray]:
        if f"{side}_speaker" in self.pair:
            return read_emb(self.path(f"{side}_speaker")).mean(axis=0)
        mel = self.mel(side)
        return None if mel is None else metrics.baseline_speaker_embedding(mel)


def _compute(name: str, inputs: _PairInputs) -> Optional[float]:
    pair = inputs.pair
    if name == "cer":
        if "hypothesis" not in pair or "reference" not in pair:
            return None
        return metrics.cer(pair["hypothesis"], pair["reference"])
    if name == "de":
        a = inputs.duration("ref")
        b = None if a is None else inputs.duration("gen")
        return None if b is None else metrics.duration_equality(a, b)
    if name == "secs":
        ref = inputs.speaker("ref")
        gen = None if ref is None else inputs.speaker("gen")
        return None if gen is None else metrics.secs(ref, gen)
    if name == "sbs":
        ref = inputs.frames("ref")
        gen = None if ref is None else inputs.frames("gen")
        return None if gen is None else metrics.speech_bert_score(gen, ref)
    if name == "mos":
        return metrics.aggregate_mos(pair["ratings"]) if pair.get("ratings") else None
    raise ValueError(f"unknown metric {name}")


def evaluate_pair(pair: dict, names: list[str], base_dir: Path, mel_cfg: dsp.MelConfig) -> dict:
    """One report line; metrics whose inputs are absent are omitted, failures land in ``errors``."""
    inputs = _PairInputs(pair, base_dir, mel_cfg)
    out = {"id": pair["id"]}
    errors = []
    for name in names:
        try:
            value = _compute(name, inputs)
        except (OSError, ValueError) as exc:
            errors.append(f"{name}: {exc}")
            continue
        if value is not None:
            out[_REPORT_KEYS[name]] = value
    if errors:
        out["errors"] = errors
    return out
