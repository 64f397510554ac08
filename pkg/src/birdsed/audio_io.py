"""WAV decoding and sample-rate conversion.

Only little-endian RIFF/WAVE PCM containers are handled: 16- and 24-bit
integer and 32-bit IEEE float. Everything downstream runs on mono clips at
the canonical 32 kHz rate, so decoding collapses channels to their mean and
``resample`` converts rates with a windowed-sinc kernel.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CANONICAL_RATE_HZ = 32000

# Resampler kernel: 64 taps under a Kaiser window (beta for ~90 dB stopband).
_TAPS = 64
_HALF = _TAPS // 2
_KAISER_BETA = 8.6

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


class UnsupportedFormatError(ValueError):
    """Container or sample format the decoder does not handle."""


class CorruptFileError(ValueError):
    """Truncated or structurally invalid WAV data."""


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer in [-1, 1] with its rate and source offset."""

    clip_id: str
    samples: np.ndarray
    sample_rate_hz: int
    start_offset_s: float = 0.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def num_samples(self) -> int:
        return self.samples.size


def decode(path: str | Path) -> AudioClip:
    """Decode a PCM WAV file to a mono clip at its native rate.

    Integer samples are scaled by the full negative range (so an int16
    -32768 maps to exactly -1.0); multi-channel audio is averaged to mono.
    Raises UnsupportedFormatError for non-WAV containers or unknown sample
    formats and CorruptFileError for truncated files.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise UnsupportedFormatError(f"{path.name}: not a RIFF/WAVE file")

    fmt_body = None
    data_body = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise CorruptFileError(f"{path.name}: truncated '{chunk_id.decode(errors='replace')}' chunk")
        if chunk_id == b"fmt ":
            fmt_body = body
        elif chunk_id == b"data":
            data_body = body
        pos += 8 + size + (size & 1)  # chunks are word aligned

    if fmt_body is None or len(fmt_body) < 16:
        raise CorruptFileError(f"{path.name}: missing or short fmt chunk")
    if data_body is None:
        raise CorruptFileError(f"{path.name}: missing data chunk")

    audio_format, n_channels, sample_rate, _, block_align, bits = struct.unpack_from(
        "<HHIIHH", fmt_body, 0
    )
    if audio_format == _FMT_EXTENSIBLE:
        if len(fmt_body) < 26:
            raise CorruptFileError(f"{path.name}: short extensible fmt chunk")
        (audio_format,) = struct.unpack_from("<H", fmt_body, 24)
    if n_channels < 1 or sample_rate < 1 or block_align < 1:
        raise CorruptFileError(f"{path.name}: invalid fmt fields")

    if (audio_format, bits) == (_FMT_PCM, 16):
        decoded = _decode_int16(data_body)
    elif (audio_format, bits) == (_FMT_PCM, 24):
        decoded = _decode_int24(data_body)
    elif (audio_format, bits) == (_FMT_FLOAT, 32):
        decoded = np.frombuffer(data_body[: len(data_body) - len(data_body) % 4], dtype="<f4")
        if len(data_body) % 4:
            raise CorruptFileError(f"{path.name}: data chunk not a whole number of samples")
        decoded = decoded.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path.name}: unsupported sample format (tag={audio_format}, bits={bits})"
        )

    if decoded.size % n_channels:
        raise CorruptFileError(f"{path.name}: data chunk not a whole number of frames")
    frames = decoded.reshape(-1, n_channels)
    mono = frames.mean(axis=1) if n_channels > 1 else frames[:, 0]
    if mono.size and not np.all(np.isfinite(mono)):
        raise CorruptFileError(f"{path.name}: non-finite sample values")
    return AudioClip(clip_id=path.stem, samples=mono, sample_rate_hz=int(sample_rate))


def _decode_int16(body: bytes) -> np.ndarray:
    if len(body) % 2:
        raise CorruptFileError("data chunk not a whole number of samples")
    return np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0


def _decode_int24(body: bytes) -> np.ndarray:
    if len(body) % 3:
        raise CorruptFileError("data chunk not a whole number of samples")
    b = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    value = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
    value = np.where(value & 0x800000, value - 0x1000000, value)  # sign extend
    return value.astype(np.float64) / 8388608.0


def encode(path: str | Path, clip: AudioClip, sample_format: str = "float32") -> None:
    """Write a mono WAV file. 32-bit float round-trips samples bit-exactly."""
    x = clip.samples
    if sample_format == "float32":
        payload = x.astype("<f4").tobytes()
        audio_format, bits = _FMT_FLOAT, 32
    elif sample_format == "int16":
        q = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2")
        payload = q.tobytes()
        audio_format, bits = _FMT_PCM, 16
    elif sample_format == "int24":
        q = np.clip(np.rint(x * 8388608.0), -8388608, 8388607).astype(np.int32)
        b = np.empty((q.size, 3), dtype=np.uint8)
        b[:, 0] = q & 0xFF
        b[:, 1] = (q >> 8) & 0xFF
        b[:, 2] = (q >> 16) & 0xFF
        payload = b.tobytes()
        audio_format, bits = _FMT_PCM, 24
    else:
        raise ValueError(f"unknown sample_format {sample_format!r}")

    block_align = bits // 8
    byte_rate = clip.sample_rate_hz * block_align
    fmt = struct.pack(
        "<HHIIHH", audio_format, 1, clip.sample_rate_hz, byte_rate, block_align, bits
    )
    out = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack("<I", len(fmt)),
            fmt,
            b"data",
            struct.pack("<I", len(payload)),
            payload,
        ]
    )
    Path(path).write_bytes(out)


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Band-limited windowed-sinc resampling to target_hz.

    Output length is round(n * target / source). A clip already at the
    target rate is returned unchanged.
    """
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    if target_hz == clip.sample_rate_hz:
        return clip
    out = _sinc_resample(clip.samples, clip.sample_rate_hz, target_hz)
    return AudioClip(
        clip_id=clip.clip_id,
        samples=out,
        sample_rate_hz=target_hz,
        start_offset_s=clip.start_offset_s,
    )


def _kaiser(t: np.ndarray) -> np.ndarray:
    """Kaiser window evaluated at tap offsets t (support |t| <= _HALF)."""
    out = np.zeros_like(t)
    inside = np.abs(t) <= _HALF
    out[inside] = np.i0(_KAISER_BETA * np.sqrt(1.0 - (t[inside] / _HALF) ** 2)) / np.i0(
        _KAISER_BETA
    )
    return out


def _sinc_resample(x: np.ndarray, src_hz: int, dst_hz: int) -> np.ndarray:
    n_out = int(math.floor(x.size * dst_hz / src_hz + 0.5))
    if x.size == 0 or n_out == 0:
        return np.zeros(n_out, dtype=np.float64)

    g = math.gcd(src_hz, dst_hz)
    up, down = dst_hz // g, src_hz // g
    cutoff = min(1.0, up / down)  # anti-aliasing when decimating

    # One FIR per output phase; fractional delay (p*down mod up)/up.
    offsets = np.arange(_TAPS, dtype=np.float64) - (_HALF - 1)
    table = np.empty((up, _TAPS), dtype=np.float64)
    for p in range(up):
        frac = (p * down % up) / up
        t = offsets - frac
        h = cutoff * np.sinc(cutoff * t) * _kaiser(t)
        gain = h.sum()
        table[p] = h / gain if gain != 0.0 else h

    pad_left = _HALF - 1
    pad_right = _HALF + 1 + down
    xp = np.concatenate([np.zeros(pad_left), x, np.zeros(pad_right)])
    windows = np.lib.stride_tricks.sliding_window_view(xp, _TAPS)

    out = np.empty(n_out, dtype=np.float64)
    for p in range(up):
        idx = np.arange(p, n_out, up)
        if idx.size == 0:
            continue
        starts = (idx * down) // up
        out[idx] = windows[starts] @ table[p]
    return out
