"""Corpus records, transcript segmentation and the dataset filtering rules."""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from ttsforge import dsp
from ttsforge.config import load_flat_config

# Bangla danda, ASCII full stop, question, exclamation, comma.
TERMINAL_MARKS = ("।", ".", "?", "!", ",")

RULE_SPEAKER = "speaker"
RULE_DURATION_MIN = "duration-min"
RULE_DURATION_MAX = "duration-max"
RULE_TEXT_LENGTH = "text-length"
RULE_SILENCE = "silence"
RULE_RATIO_BAND = "ratio-band"
RULE_UNREADABLE = "unreadable"

RULE_ORDER = (
    RULE_SPEAKER,
    RULE_DURATION_MIN,
    RULE_DURATION_MAX,
    RULE_TEXT_LENGTH,
    RULE_SILENCE,
    RULE_RATIO_BAND,
)


class ManifestError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"{message} at line {line}")
        self.line = line


@dataclass
class CorpusRecord:
    id: str
    audio_path: str
    text: str
    duration_s: Optional[float] = None
    speaker_id: Optional[str] = None
    word_timings: Optional[list[tuple[str, float, float]]] = None
    silence_ratio: Optional[float] = None

    def __post_init__(self):
        if self.duration_s is not None and not self.duration_s >= 0:
            raise ValueError(f"record {self.id}: duration_s must be >= 0")
        if self.word_timings is not None:
            self.word_timings = [(str(w), float(s), float(e)) for w, s, e in self.word_timings]
            _check_timings(self.word_timings)


def _check_timings(timings: list[tuple[str, float, float]]) -> None:
    prev_end = -math.inf
    prev_start = -math.inf
    for i, (_, start, end) in enumerate(timings):
        if end < start:
            raise ValueError(f"word {i}: end {end} precedes start {start}")
        if start < prev_start:
            raise ValueError(f"word timings unsorted at word {i}")
        if start < prev_end:
            raise ValueError(f"word timings overlap at word {i}")
        prev_start, prev_end = start, end


@dataclass(frozen=True)
class FilterPolicy:
    min_duration_s: float = 0.5
    max_duration_s: float = 11.0
    max_text_chars: int = 200
    max_silence_ratio: float = 0.35
    ratio_band: tuple[float, float] = (6.0, 25.0)
    require_speaker: bool = False
    silence_frame_ms: float = 25.0
    silence_threshold_db: float = -40.0

    def __post_init__(self):
        values = (
            self.min_duration_s, self.max_duration_s, self.max_text_chars,
            self.max_silence_ratio, *self.ratio_band,
            self.silence_frame_ms, self.silence_threshold_db,
        )
        if not all(math.isfinite(v) for v in values):
            raise ValueError("filter thresholds must be finite")
        if not self.min_duration_s < self.max_duration_s:
            raise ValueError("min_duration_s must be below max_duration_s")
        if not self.ratio_band[0] < self.ratio_band[1]:
            raise ValueError("ratio_band low must be below high")
        if not 0 <= self.max_silence_ratio <= 1:
            raise ValueError("max_silence_ratio must lie in [0, 1]")
        if self.max_text_chars < 0 or self.silence_frame_ms <= 0:
            raise ValueError("max_text_chars must be >= 0 and silence_frame_ms > 0")

    @classmethod
    def from_file(cls, path: str | Path) -> "FilterPolicy":
        return cls(**load_flat_config(path, cls))


@dataclass
class Decision:
    id: str
    rule: Optional[str] = None
    value: Optional[float] = None

    @property
    def accepted(self) -> bool:
        return self.rule is None


@dataclass
class FilterReport:
    decisions: list[Decision] = field(default_factory=list)

    @property
    def accepted(self) -> list[str]:
        return [d.id for d in self.decisions if d.accepted]

    @property
    def rejected(self) -> list[tuple[str, str, Optional[float]]]:
        return [(d.id, d.rule, d.value) for d in self.decisions if not d.accepted]

    @property
    def counts(self) -> dict[str, int]:
        counts = {rule: 0 for rule in (*RULE_ORDER, RULE_UNREADABLE)}
        for d in self.decisions:
            if not d.accepted:
                counts[d.rule] += 1
        counts["accept"] = len(self.accepted)
        return counts


def char_count(text: str) -> int:
    """Unicode scalar values after NFC normalisation, whitespace and punctuation included."""
    return len(unicodedata.normalize("NFC", text))


def text_audio_ratio(record: CorpusRecord) -> float:
    """Characters per second of audio."""
    if not record.duration_s:
        raise ValueError(f"record {record.id}: zero or unknown duration")
    return char_count(record.text) / record.duration_s


def segment_transcript(
    text: str,
    timings: list[tuple[str, float, float]],
    marks: Iterable[str] = TERMINAL_MARKS,
) -> list[tuple[str, float, float]]:
    """Split ``text`` after every token ending in a terminal mark.

    Segments are contiguous slices of ``text`` (trailing whitespace stays
    with the preceding segment), so joining them gives back ``text``.
    """
    marks = tuple(marks)
    spans = []
    pos = 0
    for token in text.split():
        start = text.index(token, pos)
        spans.append((token, start))
        pos = start + len(token)
    if len(spans) != len(timings):
        raise ValueError(f"text has {len(spans)} tokens but {len(timings)} word timings")
    if not spans:
        return []
    _check_timings(list(timings))

    segments = []
    seg_first = 0
    seg_char = 0
    for i, (token, _) in enumerate(spans):
        last = i == len(spans) - 1
        if token.endswith(marks) or last:
            end_char = len(text) if last else spans[i + 1][1]
            segments.append((text[seg_char:end_char], timings[seg_first][1], timings[i][2]))
            seg_first = i + 1
            seg_char = end_char
    return segments


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


class _AudioProbe:
    """Decodes a record's audio at most once for duration and silence."""

    def __init__(self, record: CorpusRecord, base_dir: Optional[Path], policy: FilterPolicy):
        self.record = record
        self.base_dir = base_dir
        self.policy = policy
        self._clip = None

    def clip(self) -> dsp.AudioClip:
        if self._clip is None:
            path = Path(self.record.audio_path)
            if self.base_dir is not None and not path.is_absolute():
                path = self.base_dir / path
            self._clip = dsp.read_wav(path)
        return self._clip

    def silence(self) -> float:
        return dsp.silence_ratio(
            self.clip(), self.policy.silence_frame_ms, self.policy.silence_threshold_db
        )


SilenceHook = Callable[[CorpusRecord], float]


def decide(
    record: CorpusRecord,
    policy: FilterPolicy,
    silence_hook: Optional[SilenceHook] = None,
    base_dir: Optional[Path] = None,
) -> Decision:
    """First failing rule in fixed order, or acceptance.

    Boundaries accept: durations in [min, max], up to ``max_text_chars``
    characters, silence up to the ratio, char/s ratio in the closed band.
    Missing duration or silence is measured from the audio; decode failures
    reject with rule ``unreadable``.
    """
    probe = _AudioProbe(record, base_dir, policy)
    if policy.require_speaker and not record.speaker_id:
        return Decision(record.id, RULE_SPEAKER, None)
    try:
        duration = record.duration_s
        if duration is None:
            duration = probe.clip().duration_s
    except (OSError, ValueError):
        return Decision(record.id, RULE_UNREADABLE, None)

    if duration < policy.min_duration_s:
        return Decision(record.id, RULE_DURATION_MIN, duration)
    if duration > policy.max_duration_s:
        return Decision(record.id, RULE_DURATION_MAX, duration)
    n_chars = char_count(record.text)
    if n_chars > policy.max_text_chars:
        return Decision(record.id, RULE_TEXT_LENGTH, n_chars)

    silence = record.silence_ratio
    if silence is None:
        try:
            silence = silence_hook(record) if silence_hook else probe.silence()
        except (OSError, ValueError):
            return Decision(record.id, RULE_UNREADABLE, None)
    if silence > policy.max_silence_ratio:
        return Decision(record.id, RULE_SILENCE, silence)

    ratio = n_chars / duration if duration > 0 else math.inf
    low, high = policy.ratio_band
    if not low <= ratio <= high:
        return Decision(record.id, RULE_RATIO_BAND, ratio)
    return Decision(record.id)


def apply_filters(
    records: list[CorpusRecord],
    policy: FilterPolicy | None = None,
    silence_hook: Optional[SilenceHook] = None,
    base_dir: Optional[str | Path] = None,
) -> FilterReport:
    """Decide every record independently; the report keeps input order."""
    policy = policy or FilterPolicy()
    base = Path(base_dir) if base_dir is not None else None
    return FilterReport([decide(r, policy, silence_hook, base) for r in records])


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def record_to_json(record: CorpusRecord) -> dict:
    obj = {"id": record.id, "audio": record.audio_path, "text": record.text}
    if record.speaker_id is not None:
        obj["speaker"] = record.speaker_id
    if record.word_timings is not None:
        obj["words"] = [[w, s, e] for w, s, e in record.word_timings]
    if record.duration_s is not None:
        obj["duration"] = record.duration_s
    if record.silence_ratio is not None:
        obj["silence"] = record.silence_ratio
    return obj


def _field(obj: dict, key: str, types, line: int, required: bool):
    if key not in obj:
        if required:
            raise ManifestError(f"missing field {key}", line)
        return None
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, types):
        raise ManifestError(f"field {key} has wrong type", line)
    return value


def record_from_json(obj, line: int) -> CorpusRecord:
    if not isinstance(obj, dict):
        raise ManifestError("expected a JSON object", line)
    rid = _field(obj, "id", str, line, True)
    audio = _field(obj, "audio", str, line, True)
    text = _field(obj, "text", str, line, True)
    speaker = _field(obj, "speaker", str, line, False)
    words = _field(obj, "words", list, line, False)
    duration = _field(obj, "duration", (int, float), line, False)
    silence = _field(obj, "silence", (int, float), line, False)
    if words is not None:
        for w in words:
            if not (
                isinstance(w, list) and len(w) == 3 and isinstance(w[0], str)
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in w[1:])
            ):
                raise ManifestError("field words must hold [string, number, number] triples", line)
    try:
        return CorpusRecord(
            id=rid, audio_path=audio, text=text,
            duration_s=None if duration is None else float(duration),
            speaker_id=speaker,
            word_timings=None if words is None else [tuple(w) for w in words],
            silence_ratio=None if silence is None else float(silence),
        )
    except ValueError as exc:
        raise ManifestError(str(exc), line) from None


def parse_manifest(text: str) -> list[CorpusRecord]:
    records = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"malformed JSON ({exc.msg})", lineno) from None
        rec = record_from_json(obj, lineno)
        if rec.id in seen:
            raise ManifestError(f"duplicate id {rec.id!r}", lineno)
        seen.add(rec.id)
        records.append(rec)
    return records


def read_manifest(path: str | Path) -> list[CorpusRecord]:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def format_manifest(records: Iterable[CorpusRecord]) -> str:
    return "".join(_dumps(record_to_json(r)) + "\n" for r in records)


def format_report(report: FilterReport) -> str:
    lines = []
    for d in report.decisions:
        obj = {
            "id": d.id,
            "status": "accept" if d.accepted else "reject",
            "rule": d.rule,
            "value": d.value,
        }
        lines.append(_dumps(obj) + "\n")
    return "".join(lines)


def write_manifest(records_or_report, path: str | Path) -> None:
    """Write records as a manifest, or a ``FilterReport`` as report lines."""
    if isinstance(records_or_report, FilterReport):
        text = format_report(records_or_report)
    else:
        text = format_manifest(records_or_report)
    Path(path).write_text(text, encoding="utf-8")
