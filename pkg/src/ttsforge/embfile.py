"""EMB1 binary container for embedding sequences and matrix fixtures.

Layout: 8-byte magic ``EMBSEQ01``, little-endian uint32 frame count and
dimension, then ``T * d`` little-endian float32 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMBSEQ01"
_HEADER = struct.Struct("<8sII")


def encode_emb(matrix) -> bytes:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ValueError("EMB1 holds a 2-D matrix")
    return _HEADER.pack(MAGIC, m.shape[0], m.shape[1]) + m.astype("<f4").tobytes()


def decode_emb(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ValueError("EMB1 data shorter than its header")
    magic, t, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad EMB1 magic {magic!r}")
    expected = _HEADER.size + 4 * t * d
    if len(data) != expected:
        raise ValueError(f"EMB1 payload size {len(data)} != expected {expected} for {t}x{d}")
    return np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64).reshape(t, d)


def write_emb(matrix, path: str | Path) -> None:
    Path(path).write_bytes(encode_emb(matrix))


def read_emb(path: str | Path) -> np.ndarray:
    return decode_emb(Path(path).read_bytes())
