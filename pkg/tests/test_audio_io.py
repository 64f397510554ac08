"""WAV decode/encode and resampler behavior."""

import math
import struct

import numpy as np
import pytest

from birdsed import audio_io
from birdsed.audio_io import (
    CANONICAL_RATE_HZ,
    AudioClip,
    CorruptFileError,
    UnsupportedFormatError,
    decode,
    encode,
    resample,
)


def _wav_bytes(fmt_tag, bits, channels, rate, payload, fmt_extra=b""):
    """Hand-rolled RIFF container so decode() is tested against raw bytes."""
    fmt = struct.pack(
        "<HHIIHH", fmt_tag, channels, rate, rate * channels * bits // 8,
        channels * bits // 8, bits,
    ) + fmt_extra
    return b"".join([
        b"RIFF", struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)), b"WAVE",
        b"fmt ", struct.pack("<I", len(fmt)), fmt,
        b"data", struct.pack("<I", len(payload)), payload,
    ])


def test_int16_full_scale_negative_maps_to_minus_one(tmp_path):
    payload = struct.pack("<4h", -32768, 32767, 16384, 0)
    p = tmp_path / "scale.wav"
    p.write_bytes(_wav_bytes(1, 16, 1, 32000, payload))
    clip = decode(p)
    assert clip.sample_rate_hz == 32000
    assert clip.clip_id == "scale"
    np.testing.assert_allclose(
        clip.samples, [-1.0, 32767 / 32768, 0.5, 0.0], rtol=0, atol=0
    )


def test_stereo_collapses_to_channel_mean(tmp_path):
    # interleaved L/R: (+0.5, -0.5) repeated -> exact zeros after the mean
    payload = struct.pack("<6h", 16384, -16384, 16384, -16384, 16384, -16384)
    p = tmp_path / "stereo.wav"
    p.write_bytes(_wav_bytes(1, 16, 2, 44100, payload))
    clip = decode(p)
    assert clip.num_samples == 3
    np.testing.assert_array_equal(clip.samples, np.zeros(3))


def test_int24_sign_extension(tmp_path):
    # bytes are little-endian 3-byte two's complement
    samples = [-8388608, 8388607, 4194304]
    payload = b"".join(
        bytes([v & 0xFF, (v >> 8) & 0xFF, (v >> 16) & 0xFF]) for v in samples
    )
    p = tmp_path / "deep.wav"
    p.write_bytes(_wav_bytes(1, 24, 1, 32000, payload))
    clip = decode(p)
    np.testing.assert_allclose(
        clip.samples, [-1.0, 8388607 / 8388608, 0.5], rtol=0, atol=0
    )


def test_float32_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, 977).astype(np.float32).astype(np.float64)
    clip = AudioClip(clip_id="rt", samples=x, sample_rate_hz=48000)
    p = tmp_path / "rt.wav"
    encode(p, clip, sample_format="float32")
    back = decode(p)
    assert back.sample_rate_hz == 48000
    np.testing.assert_array_equal(back.samples, x)


def test_extensible_header_resolves_subformat(tmp_path):
    x = np.linspace(-0.5, 0.5, 33).astype(np.float32)
    # cbSize, valid bits, channel mask, then the GUID whose first u16 is the format tag
    extra = struct.pack("<HHIH", 22, 32, 0, 3) + b"\x00" * 14
    p = tmp_path / "ext.wav"
    p.write_bytes(_wav_bytes(0xFFFE, 32, 1, 32000, x.tobytes(), fmt_extra=extra))
    clip = decode(p)
    np.testing.assert_array_equal(clip.samples, x.astype(np.float64))


@pytest.mark.parametrize("fmt", ["int16", "int24"])
def test_integer_encode_round_trip_within_quantum(tmp_path, fmt):
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.9, 0.9, 512)
    clip = AudioClip(clip_id="q", samples=x, sample_rate_hz=32000)
    p = tmp_path / "q.wav"
    encode(p, clip, sample_format=fmt)
    back = decode(p)
    quantum = 1 / 32768 if fmt == "int16" else 1 / 8388608
    np.testing.assert_allclose(back.samples, x, rtol=0, atol=quantum)


def test_truncated_data_chunk_is_corrupt(tmp_path):
    good = _wav_bytes(1, 16, 1, 32000, struct.pack("<4h", 1, 2, 3, 4))
    p = tmp_path / "trunc.wav"
    p.write_bytes(good[:-3])
    with pytest.raises(CorruptFileError):
        decode(p)


def test_non_wav_container_rejected(tmp_path):
    p = tmp_path / "nope.wav"
    p.write_bytes(b"OggS" + b"\x00" * 64)
    with pytest.raises(UnsupportedFormatError):
        decode(p)


def test_unsupported_bit_depth_rejected(tmp_path):
    p = tmp_path / "u8.wav"
    p.write_bytes(_wav_bytes(1, 8, 1, 32000, b"\x80\x80"))
    with pytest.raises(UnsupportedFormatError):
        decode(p)


def test_missing_data_chunk_is_corrupt(tmp_path):
    fmt = struct.pack("<HHIIHH", 1, 1, 32000, 64000, 2, 16)
    raw = b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt)) + b"WAVE"
    raw += b"fmt " + struct.pack("<I", len(fmt)) + fmt
    p = tmp_path / "nodata.wav"
    p.write_bytes(raw)
    with pytest.raises(CorruptFileError):
        decode(p)


def test_resample_output_length_follows_rounded_ratio():
    rng = np.random.default_rng(11)
    clip = AudioClip(clip_id="len", samples=rng.standard_normal(48000), sample_rate_hz=48000)
    out = resample(clip, CANONICAL_RATE_HZ)
    assert out.num_samples == 32000
    assert out.sample_rate_hz == 32000

    odd = AudioClip(clip_id="odd", samples=rng.standard_normal(44100), sample_rate_hz=44100)
    out2 = resample(odd, 32000)
    assert out2.num_samples == int(math.floor(44100 * 32000 / 44100 + 0.5))


def test_resample_same_rate_is_identity():
    clip = AudioClip(clip_id="id", samples=np.ones(100), sample_rate_hz=32000)
    assert resample(clip, 32000) is clip


def test_resample_preserves_tone_frequency():
    # 440 Hz tone at 48 kHz must still peak at 440 Hz after conversion
    src = 48000
    t = np.arange(src) / src
    clip = AudioClip(clip_id="tone", samples=np.sin(2 * np.pi * 440.0 * t), sample_rate_hz=src)
    out = resample(clip, 32000)
    spectrum = np.abs(np.fft.rfft(out.samples))
    peak_hz = np.argmax(spectrum) * 32000 / out.num_samples
    assert abs(peak_hz - 440.0) < 2.0


def test_resample_preserves_dc_level():
    clip = AudioClip(clip_id="dc", samples=np.full(8000, 0.25), sample_rate_hz=48000)
    out = resample(clip, 32000)
    interior = out.samples[100:-100]
    np.testing.assert_allclose(interior, 0.25, rtol=1e-6)


def test_resample_peak_overshoot_bounded():
    # The 1.1x bound holds for in-band content. Signals with energy past the
    # target nyquist (hard steps, square waves) ring harder under ANY sharp
    # anti-alias kernel, ideal sinc interpolation included, so they are not
    # valid witnesses for this property.
    src = 44100
    t = np.arange(src) / src

    rng = np.random.default_rng(23)
    spectrum = np.zeros(src // 2 + 1, dtype=np.complex128)
    band = slice(1, int(0.8 * 11025))  # keep content below every target nyquist
    spectrum[band] = rng.standard_normal(band.stop - 1) + 1j * rng.standard_normal(band.stop - 1)
    smooth = np.fft.irfft(spectrum, src)
    smooth /= np.abs(smooth).max()

    chirp = np.sin(2 * np.pi * (200.0 + 4000.0 * t) * t)

    for x in (smooth, chirp, np.sin(2 * np.pi * 440.0 * t)):
        clip = AudioClip(clip_id="peak", samples=x, sample_rate_hz=src)
        for target in (32000, 48000, 22050):
            out = resample(clip, target)
            assert np.abs(out.samples).max() <= 1.1 * np.abs(x).max()


def test_resample_upsampling_then_down_recovers_band_limited_signal():
    src = 32000
    t = np.arange(src // 2) / src
    x = np.sin(2 * np.pi * 1234.0 * t) + 0.5 * np.sin(2 * np.pi * 3456.0 * t)
    clip = AudioClip(clip_id="band", samples=x, sample_rate_hz=src)
    back = resample(resample(clip, 48000), src)
    assert back.num_samples == clip.num_samples
    core = slice(200, -200)
    err = np.abs(back.samples[core] - x[core]).max()
    assert err < 1e-3


def test_resample_rejects_bad_target():
    clip = AudioClip(clip_id="bad", samples=np.zeros(10), sample_rate_hz=32000)
    with pytest.raises(ValueError):
        resample(clip, 0)


def test_clip_validation():
    with pytest.raises(ValueError):
        AudioClip(clip_id="nan", samples=np.array([0.0, np.nan]), sample_rate_hz=32000)
    with pytest.raises(ValueError):
        AudioClip(clip_id="2d", samples=np.zeros((2, 2)), sample_rate_hz=32000)
    with pytest.raises(ValueError):
        AudioClip(clip_id="rate", samples=np.zeros(4), sample_rate_hz=0)
    clip = AudioClip(clip_id="ok", samples=np.zeros(64000), sample_rate_hz=32000)
    assert clip.duration_s == pytest.approx(2.0)


def test_empty_data_chunk_yields_empty_clip(tmp_path):
    p = tmp_path / "empty.wav"
    p.write_bytes(_wav_bytes(1, 16, 1, 32000, b""))
    clip = decode(p)
    assert clip.num_samples == 0


def test_canonical_rate_constant():
    assert audio_io.CANONICAL_RATE_HZ == 32000
