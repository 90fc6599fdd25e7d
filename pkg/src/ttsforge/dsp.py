"""Audio decoding, mel spectrograms and silence measurement."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ttsforge.config import load_flat_config


class WavError(ValueError):
    """Malformed or unsupported WAV data; ``offset`` is the byte position at fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 22050
    fft_size: int = 1024
    hop: int = 256
    mel_bins: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.sample_rate <= 0 or self.fft_size <= 0 or self.hop <= 0:
            raise ValueError("sample_rate, fft_size and hop must be positive")
        if self.hop > self.fft_size:
            raise ValueError(f"hop ({self.hop}) must not exceed fft_size ({self.fft_size})")
        if self.mel_bins < 1:
            raise ValueError("mel_bins must be >= 1")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError(
                f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={self.fmin} fmax={self.fmax}"
            )
        if not self.log_floor > 0:
            raise ValueError("log_floor must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "MelConfig":
        return cls(**load_flat_config(path, cls))


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # (T, mel_bins)
    config: MelConfig = field(default_factory=MelConfig)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE container holding 16-bit mono PCM."""
    if len(data) < 12:
        raise WavError("truncated RIFF header", 0)
    if data[0:4] != b"RIFF":
        raise WavError("missing RIFF magic", 0)
    if data[8:12] != b"WAVE":
        raise WavError("missing WAVE form type", 8)

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + size > len(data):
            raise WavError(f"chunk {chunk_id!r} overruns file", pos)
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavError("fmt chunk too short", pos)
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag != 1:
                raise WavError(f"unsupported encoding (format tag {tag}, need PCM=1)", body)
            if channels != 1:
                raise WavError(f"unsupported channel count {channels}", body + 2)
            if rate == 0:
                raise WavError("sample rate is zero", body + 4)
            if bits != 16:
                raise WavError(f"unsupported bit depth {bits}", body + 14)
            fmt = rate
        elif chunk_id == b"data":
            if fmt is None:
                raise WavError("data chunk before fmt chunk", pos)
            if size % 2:
                raise WavError("odd data size for 16-bit PCM", pos + 4)
            pcm = np.frombuffer(data, dtype="<i2", count=size // 2, offset=body)
            return AudioClip(pcm.astype(np.float64) / 32768.0, fmt)
        # chunks are word aligned
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavError("no fmt chunk", pos)
    raise WavError("no data chunk", pos)


def encode_wav(clip: AudioClip) -> bytes:
    """16-bit mono PCM encoding; samples are clipped to the representable range."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16,
        b"data", len(payload),
    )
    return header + payload


def read_wav(path: str | Path) -> AudioClip:
    return decode_wav(Path(path).read_bytes())


def write_wav(clip: AudioClip, path: str | Path) -> None:
    Path(path).write_bytes(encode_wav(clip))


# ---------------------------------------------------------------------------
# Spectral analysis
# ---------------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    """Peak frequency (Hz) of each triangular band."""
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2))
    return edges[1:-1]


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (mel_bins, fft_size // 2 + 1).

    Each band rises from the previous band's center to its own and falls to the
    next one's, so a filter only overlaps its immediate neighbours.
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2))
    bins_hz = np.fft.rfftfreq(cfg.fft_size, d=1.0 / cfg.sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins_hz[None, :] - lower) / (center - lower)
    falling = (upper - bins_hz[None, :]) / (upper - center)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(bank.sum(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"mel band {int(empty[0])} contains no FFT bin; "
            "use fewer mel_bins or a larger fft_size"
        )
    return bank


def num_frames(n_samples: int, fft_size: int, hop: int) -> int:
    """Frame count 1 + (n - fft_size) // hop.

    The uncovered tail after the last full window is always shorter than
    ``hop``, so the zero-padding rule (pad only when at least ``hop`` samples
    remain) never triggers and no padded frame is emitted.
    """
    if n_samples < fft_size:
        raise ValueError(f"clip has {n_samples} samples, fewer than fft_size={fft_size}")
    return 1 + (n_samples - fft_size) // hop


def stft_magnitude(samples: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """Hann-windowed magnitude STFT, shape (T, fft_size // 2 + 1)."""
    t = num_frames(len(samples), fft_size, hop)
    idx = np.arange(fft_size)[None, :] + hop * np.arange(t)[:, None]
    window = np.hanning(fft_size + 1)[:-1]  # periodic Hann
    return np.abs(np.fft.rfft(samples[idx] * window, axis=1))


def mel_spectrogram(clip: AudioClip, cfg: MelConfig | None = None) -> MelSpectrogram:
    cfg = cfg or MelConfig()
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"clip sample rate {clip.sample_rate} does not match config {cfg.sample_rate}"
        )
    mag = stft_magnitude(clip.samples, cfg.fft_size, cfg.hop)
    energy = mag @ mel_filterbank(cfg).T
    frames = np.log(np.maximum(energy, cfg.log_floor))
    frames.setflags(write=False)
    return MelSpectrogram(frames, cfg)


def silence_ratio(clip: AudioClip, frame_ms: float = 25.0, rel_db_threshold: float = -40.0) -> float:
    """Fraction of non-overlapping frames quieter than the loudest frame by more than the threshold.

    A partial trailing frame is ignored. An all-zero clip is entirely silent.
    """
    if len(clip.samples) == 0:
        raise ValueError("cannot measure silence of an empty clip")
    frame_len = int(round(frame_ms * clip.sample_rate / 1000.0))
    n = len(clip.samples) // frame_len if frame_len > 0 else 0
    if n < 1:
        raise ValueError(f"frame of {frame_ms} ms does not fit in the clip")
    frames = clip.samples[: n * frame_len].reshape(n, frame_len)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    peak = rms.max()
    if peak == 0.0:
        return 1.0
    threshold = peak * 10.0 ** (rel_db_threshold / 20.0)
    return float(np.count_nonzero(rms < threshold)) / n


def tone(freq_hz: float, duration_s: float, sample_rate: int, amplitude: float = 0.5) -> AudioClip:
    """Sine tone helper used by fixtures and tests."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    return AudioClip(amplitude * np.sin(2.0 * math.pi * freq_hz * t), sample_rate)
