"""Reference log-mel spectrograms: torch STFT plus an interp-built filterbank.

Triangles are hat functions over Hz-domain band edges placed uniformly on the
mel scale, each scaled by 2 / (upper_edge - lower_edge). The dB conversion is
relative to the spectrogram maximum with a -80 dB floor; an all-zero clip maps
to a floor-valued spectrogram. Output uses the MELS binary container: the
magic b"MELS", a little-endian (version u32, n_mels u32, n_frames u32,
start_offset f64) header, then row-major float32 data.
"""

import struct
from pathlib import Path

import numpy as np
import torch

SAMPLE_RATE_HZ = 32000
N_MELS = 128
F_MIN_HZ = 0.0
F_MAX_HZ = 16000.0
N_FFT = 3200
HOP_LENGTH = 80
FLOOR_DB = -80.0

MELS_MAGIC = b"MELS"
MELS_VERSION = 1


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def band_edges(
    n_mels: int = N_MELS, f_min: float = F_MIN_HZ, f_max: float = F_MAX_HZ
) -> np.ndarray:
    """n_mels + 2 Hz edge frequencies, uniform on the mel scale."""
    return np.asarray(mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)))


def filterbank(
    n_mels: int = N_MELS,
    f_min: float = F_MIN_HZ,
    f_max: float = F_MAX_HZ,
    n_fft: int = N_FFT,
    sample_rate: int = SAMPLE_RATE_HZ,
) -> np.ndarray:
    edges = band_edges(n_mels, f_min, f_max)
    freqs = np.arange(n_fft // 2 + 1, dtype=np.float64) * sample_rate / n_fft
    fb = np.empty((n_mels, freqs.size))
    for i in range(n_mels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        hat = np.interp(freqs, [lo, center, hi], [0.0, 1.0, 0.0], left=0.0, right=0.0)
        fb[i] = hat * (2.0 / (hi - lo))
    return fb


def logmel(samples: np.ndarray) -> np.ndarray:
    """dB-valued [N_MELS x (1 + n // HOP_LENGTH)] reference spectrogram."""
    spectrum = torch.stft(
        torch.from_numpy(np.asarray(samples, dtype=np.float64)),
        n_fft=N_FFT,
        hop_length=HOP_LENGTH,
        window=torch.hann_window(N_FFT, periodic=False, dtype=torch.float64),
        center=True,
        pad_mode="reflect",
        return_complex=True,
    )
    power = (spectrum.real**2 + spectrum.imag**2).numpy()
    mel = filterbank() @ power
    peak = mel.max()
    if peak <= 0.0:
        return np.full_like(mel, FLOOR_DB)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(mel / peak)
    return np.clip(db, FLOOR_DB, None)


def write_mels(path: str | Path, data: np.ndarray, start_offset_s: float = 0.0) -> None:
    n_mels, n_frames = data.shape
    header = MELS_MAGIC + struct.pack("<IIId", MELS_VERSION, n_mels, n_frames, start_offset_s)
    Path(path).write_bytes(header + np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_mels(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MELS_MAGIC:
        raise ValueError(f"{Path(path).name}: not a MELS file")
    version, n_mels, n_frames, _ = struct.unpack_from("<IIId", raw, 4)
    if version != MELS_VERSION:
        raise ValueError(f"unsupported MELS version {version}")
    return np.frombuffer(raw[24:], dtype="<f4", count=n_mels * n_frames).reshape(n_mels, n_frames)
