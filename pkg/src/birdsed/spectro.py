"""Log-mel spectrograms, segmentation, weak-signal filtering, and folds.

The feature parameters used throughout the pipeline: 32 kHz audio, 128 mel
bands spanning 0..16 kHz, an FFT window of 3200 samples and a hop of 80
samples (400 frames per second). Spectrograms are expressed in dB relative
to the per-segment maximum and floored at -80 dB.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .audio_io import AudioClip

MELS_MAGIC = b"MELS"
MELS_VERSION = 1


class EmptyClipError(ValueError):
    """Spectrogram requested for a clip with no samples."""


class DegenerateBandError(ValueError):
    """A mel filter would contain no FFT bin at this resolution."""


@dataclass(frozen=True)
class MelConfig:
    """Mel spectrogram parameters; defaults are the pipeline's canonical set."""

    sample_rate_hz: int = 32000
    n_mels: int = 128
    f_min_hz: float = 0.0
    f_max_hz: float = 16000.0
    n_fft: int = 3200
    hop_length: int = 80
    power_exponent: float = 2.0
    log_floor_db: float = -80.0

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not (0 <= self.f_min_hz < self.f_max_hz <= self.sample_rate_hz / 2):
            raise ValueError(
                f"need f_min < f_max <= nyquist, got [{self.f_min_hz}, {self.f_max_hz}] "
                f"at {self.sample_rate_hz} Hz"
            )
        if not (0 < self.hop_length <= self.n_fft):
            raise ValueError("hop_length must be in (0, n_fft]")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor_db >= 0:
            raise ValueError("log_floor_db must be negative")

    @property
    def n_freq_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def frames_per_second(self) -> float:
        return self.sample_rate_hz / self.hop_length


@dataclass(frozen=True)
class MelSpectrogram:
    """dB-valued [n_mels x n_frames] matrix plus its generating config."""

    clip_id: str
    start_offset_s: float
    data: np.ndarray
    config: MelConfig

    @property
    def n_mels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SignalQualityThresholds:
    """Weak-signal cutoffs on the spectrogram rescaled from [floor, 0] to [0, 1]."""

    min_max_value: float = 0.15
    min_mean_value: float = 0.005

    def __post_init__(self) -> None:
        for name in ("min_max_value", "min_mean_value"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def hz_to_mel(f_hz):
    """Mel scale, 2595 * log10(1 + f / 700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(config: MelConfig) -> np.ndarray:
    """n_mels + 2 band edge frequencies in Hz, equally spaced on the mel scale."""
    mels = np.linspace(hz_to_mel(config.f_min_hz), hz_to_mel(config.f_max_hz), config.n_mels + 2)
    return mel_to_hz(mels)


def mel_center_frequencies(config: MelConfig) -> np.ndarray:
    """Center frequency (Hz) of each of the n_mels triangular filters."""
    return mel_band_edges(config)[1:-1]


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Triangular mel filterbank, area-normalized, shape [n_mels, n_fft//2 + 1].

    Filter i rises from edge i to edge i+1 and falls to edge i+2, evaluated at
    the FFT bin frequencies, then is scaled by 2 / (edge[i+2] - edge[i]).
    Raises DegenerateBandError when the FFT resolution leaves a filter empty.
    """
    edges = mel_band_edges(config)
    freqs = np.arange(config.n_freq_bins, dtype=np.float64) * config.sample_rate_hz / config.n_fft

    lower = (freqs[np.newaxis, :] - edges[:-2, np.newaxis]) / (
        edges[1:-1] - edges[:-2]
    )[:, np.newaxis]
    upper = (edges[2:, np.newaxis] - freqs[np.newaxis, :]) / (
        edges[2:] - edges[1:-1]
    )[:, np.newaxis]
    weights = np.maximum(0.0, np.minimum(lower, upper))

    empty = ~(weights > 0).any(axis=1)
    if empty.any():
        raise DegenerateBandError(
            f"{int(empty.sum())} mel filters contain no FFT bin; "
            f"reduce n_mels or increase n_fft"
        )

    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, np.newaxis]
    return weights


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect-pad by `pad` on both ends; short inputs reflect repeatedly."""
    if x.size == 1:
        return np.pad(x, pad, mode="edge")
    out = x
    remaining = pad
    while remaining > 0:
        step = min(remaining, out.size - 1)
        out = np.pad(out, step, mode="reflect")
        remaining -= step
    return out


def compute_logmel(clip: AudioClip, config: MelConfig | None = None) -> MelSpectrogram:
    """Centered-STFT log-mel spectrogram of a clip.

    The signal is reflect-padded by n_fft/2, framed at the hop length under a
    symmetric Hann window, and the magnitude spectrum raised to
    power_exponent is projected through the mel filterbank. Values are
    converted to dB as 10*log10(x / max(x)) and clamped at log_floor_db; an
    all-zero clip comes out at the floor everywhere.
    """
    config = config or MelConfig()
    if clip.samples.size == 0:
        raise EmptyClipError(f"clip {clip.clip_id!r} has no samples")
    if clip.sample_rate_hz != config.sample_rate_hz:
        raise ValueError(
            f"clip rate {clip.sample_rate_hz} != config rate {config.sample_rate_hz}"
        )

    x = clip.samples
    pad = config.n_fft // 2
    padded = _reflect_pad(x, pad)
    n_frames = 1 + x.size // config.hop_length
    window = np.hanning(config.n_fft)  # symmetric raised cosine
    fb = sparse.csr_matrix(mel_filterbank(config))

    mel_power = np.empty((config.n_mels, n_frames), dtype=np.float64)
    frame_starts = np.arange(n_frames) * config.hop_length
    # Frames are processed in blocks to bound the framed-matrix memory.
    block = max(64, (1 << 22) // config.n_fft)
    view = np.lib.stride_tricks.sliding_window_view(padded, config.n_fft)
    for lo in range(0, n_frames, block):
        hi = min(lo + block, n_frames)
        frames = view[frame_starts[lo:hi]] * window
        spectrum = np.abs(np.fft.rfft(frames, axis=1))
        np.power(spectrum, config.power_exponent, out=spectrum)
        mel_power[:, lo:hi] = fb @ spectrum.T

    ref = mel_power.max()
    floor_ratio = 10.0 ** (config.log_floor_db / 10.0)
    if ref <= 0.0:
        data = np.full_like(mel_power, config.log_floor_db)
    else:
        data = 10.0 * np.log10(np.maximum(mel_power / ref, floor_ratio))
    return MelSpectrogram(
        clip_id=clip.clip_id,
        start_offset_s=clip.start_offset_s,
        data=data,
        config=config,
    )


def segment(clip: AudioClip, window_s: float = 7.0, stride_s: float = 5.0) -> list[AudioClip]:
    """Cut a clip into overlapping fixed-length training segments.

    Segments start at multiples of stride_s. When audio is left over past the
    last full window, one extra segment is right-aligned to the clip end;
    clips shorter than the window yield a single zero-padded segment.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if not (0 < stride_s <= window_s):
        raise ValueError("stride_s must be in (0, window_s]")

    sr = clip.sample_rate_hz
    win = int(round(window_s * sr))
    stride = int(round(stride_s * sr))
    n = clip.samples.size

    starts: list[int] = []
    s = 0
    while s + win <= n:
        starts.append(s)
        s += stride

    if not starts:
        padded = np.zeros(win, dtype=np.float64)
        padded[:n] = clip.samples
        return [
            AudioClip(
                clip_id=clip.clip_id,
                samples=padded,
                sample_rate_hz=sr,
                start_offset_s=clip.start_offset_s,
            )
        ]

    if starts[-1] + win < n:
        starts.append(n - win)  # right-align the final window

    return [
        AudioClip(
            clip_id=clip.clip_id,
            samples=clip.samples[s : s + win],
            sample_rate_hz=sr,
            start_offset_s=clip.start_offset_s + s / sr,
        )
        for s in starts
    ]


def rescale_unit(spec: MelSpectrogram) -> np.ndarray:
    """Spectrogram linearly rescaled from [log_floor_db, 0] to [0, 1]."""
    floor = spec.config.log_floor_db
    return (spec.data - floor) / (0.0 - floor)


def weak_signal_filter(spec: MelSpectrogram, thresholds: SignalQualityThresholds) -> bool:
    """True when the segment carries enough signal to keep for training.

    Discards iff the unit-rescaled max falls below min_max_value or the
    unit-rescaled mean falls below min_mean_value.
    """
    unit = rescale_unit(spec)
    return not (unit.max() < thresholds.min_max_value or unit.mean() < thresholds.min_mean_value)


def assign_stratified_folds(labels: Sequence[str], k: int = 5, seed: int = 0) -> np.ndarray:
    """Deterministic stratified fold assignment.

    Within every class the members are shuffled and dealt round-robin from a
    random starting fold, so per-class fold counts never differ by more
    than 1.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    labels = list(labels)
    if not labels:
        raise ValueError("need at least one sample")

    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.int64)
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    for lab in sorted(by_class):
        idx = np.array(by_class[lab])
        rng.shuffle(idx)
        start = int(rng.integers(k))
        for j, sample_idx in enumerate(idx):
            folds[sample_idx] = (start + j) % k
    return folds


def write_mels(path: str | Path, spec: MelSpectrogram) -> None:
    """Serialize a spectrogram in the MELS binary format (f32, row-major LE)."""
    data32 = np.ascontiguousarray(spec.data, dtype="<f4")
    header = MELS_MAGIC + struct.pack(
        "<IIId", MELS_VERSION, spec.n_mels, spec.n_frames, spec.start_offset_s
    )
    Path(path).write_bytes(header + data32.tobytes())


def read_mels(
    path: str | Path, config: MelConfig | None = None, clip_id: str | None = None
) -> MelSpectrogram:
    """Read a MELS binary file; clip_id defaults to the file stem."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 24 or raw[:4] != MELS_MAGIC:
        raise ValueError(f"{path.name}: not a MELS file")
    version, n_mels, n_frames, offset = struct.unpack_from("<IIId", raw, 4)
    if version != MELS_VERSION:
        raise ValueError(f"{path.name}: unsupported MELS version {version}")
    expected = 24 + 4 * n_mels * n_frames
    if len(raw) < expected:
        raise ValueError(f"{path.name}: truncated MELS payload")
    data = np.frombuffer(raw[24:expected], dtype="<f4").reshape(n_mels, n_frames)
    return MelSpectrogram(
        clip_id=clip_id if clip_id is not None else path.stem,
        start_offset_s=offset,
        data=data.astype(np.float64),
        config=config or MelConfig(),
    )


def export_csv(path: str | Path, spec: MelSpectrogram) -> None:
    """Debug CSV export, one row per mel bin."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in spec.data:
            fh.write(",".join(f"{v:.6g}" for v in row))
            fh.write("\n")
