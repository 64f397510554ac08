"""Minimal mono WAV writers (PCM16 and IEEE float32)."""

import struct
from pathlib import Path

import numpy as np

_FMT_PCM = 1
_FMT_FLOAT = 3


def _riff(path: Path, audio_format: int, bits: int, rate: int, payload: bytes) -> None:
    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        audio_format,
        1,
        rate,
        rate * block_align,
        block_align,
        bits,
        b"data",
        len(payload),
    )
    path.write_bytes(header + payload)


def write_wav_float32(path: str | Path, samples: np.ndarray, rate: int) -> None:
    _riff(Path(path), _FMT_FLOAT, 32, rate, samples.astype("<f4").tobytes())


def write_wav_int16(path: str | Path, samples: np.ndarray, rate: int) -> None:
    q = np.clip(np.rint(samples * 32768.0), -32768, 32767).astype("<i2")
    _riff(Path(path), _FMT_PCM, 16, rate, q.tobytes())
