"""Training-time spectrogram augmentation.

Six stages in a fixed order: mixing, random power, white noise, pink noise,
bandpass noise, and upper-frequency attenuation. All stages keep values
inside [log_floor_db, 0]; additive noise operates in the linear power domain
and re-references to the new maximum only when the addition pushes past 0 dB,
so sub-maximal noise leaves untouched rows bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .spectro import MelSpectrogram, mel_center_frequencies


class ShapeMismatchError(ValueError):
    """Mixed spectrograms must share shape and config."""


@dataclass(frozen=True)
class LabeledSpectrogram:
    spec: MelSpectrogram
    labels: frozenset[str]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("training samples need at least one label")
        object.__setattr__(self, "labels", frozenset(self.labels))


@dataclass(frozen=True)
class AugmentConfig:
    """Stage probabilities and samplers for the augmentation chain."""

    mix_probability: float = 0.7
    random_power_probability: float = 0.5
    white_noise_probability: float = 0.5
    pink_noise_probability: float = 0.5
    bandpass_noise_probability: float = 0.5
    lower_upper_probability: float = 0.5
    random_power_range: tuple[float, float] = (0.5, 3.0)
    white_noise_snr_db: tuple[float, float] = (3.0, 30.0)
    pink_noise_snr_db: tuple[float, float] = (3.0, 30.0)
    bandpass_snr_db: tuple[float, float] = (3.0, 30.0)
    bandpass_width_bins: tuple[int, int] = (8, 64)
    upper_attenuation_db: tuple[float, float] = (3.0, 30.0)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "mix_probability",
            "random_power_probability",
            "white_noise_probability",
            "pink_noise_probability",
            "bandpass_noise_probability",
            "lower_upper_probability",
        ):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.random_power_range[0] <= 0:
            raise ValueError("random power exponents must be positive")
        for name in (
            "random_power_range",
            "white_noise_snr_db",
            "pink_noise_snr_db",
            "bandpass_snr_db",
            "bandpass_width_bins",
            "upper_attenuation_db",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty: ({lo}, {hi})")
        if self.bandpass_width_bins[0] < 1:
            raise ValueError("bandpass width must be at least 1 bin")


def _to_linear(spec: MelSpectrogram) -> np.ndarray:
    return 10.0 ** (spec.data / 10.0)


def _from_linear(spec: MelSpectrogram, linear: np.ndarray) -> MelSpectrogram:
    floor = spec.config.log_floor_db
    db = 10.0 * np.log10(np.maximum(linear, 10.0 ** (floor / 10.0)))
    return replace(spec, data=np.minimum(db, 0.0))


def _rereference_if_over(linear: np.ndarray) -> np.ndarray:
    """Divide by the max only when addition pushed the peak past 0 dB."""
    peak = linear.max()
    return linear / peak if peak > 1.0 else linear


def _sample_range(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return lo if lo == hi else float(rng.uniform(lo, hi))


def mix(
    samples: Sequence[LabeledSpectrogram],
    rng: np.random.Generator,
    weights: Sequence[float] | None = None,
) -> LabeledSpectrogram:
    """Convex combination of 2 or 3 spectrograms in linear power; labels union."""
    if len(samples) not in (2, 3):
        raise ValueError(f"mix takes 2 or 3 samples, got {len(samples)}")
    first = samples[0].spec
    for s in samples[1:]:
        if s.spec.data.shape != first.data.shape or s.spec.config != first.config:
            raise ShapeMismatchError("mixed spectrograms must share shape and config")

    if weights is None:
        weights = rng.dirichlet(np.ones(len(samples)))
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(samples),) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")

    labels = frozenset().union(*(s.labels for s in samples))
    nonzero = [(wi, s) for wi, s in zip(w, samples) if wi > 0.0]
    if len(nonzero) == 1 and nonzero[0][0] == 1.0:
        return LabeledSpectrogram(spec=nonzero[0][1].spec, labels=labels)

    combined = np.zeros_like(first.data)
    for wi, s in nonzero:
        combined += wi * _to_linear(s.spec)
    return LabeledSpectrogram(spec=_from_linear(first, combined), labels=labels)


def random_power(
    spec: MelSpectrogram, rng: np.random.Generator, gamma_range: tuple[float, float] = (0.5, 3.0)
) -> MelSpectrogram:
    """Contrast change: unit-rescale, raise to a sampled exponent, rescale back."""
    if gamma_range[0] <= 0:
        raise ValueError("gamma must be positive")
    gamma = _sample_range(rng, gamma_range)
    floor = spec.config.log_floor_db
    unit = (spec.data - floor) / (0.0 - floor)
    return replace(spec, data=floor + (unit**gamma) * (0.0 - floor))


def _add_noise(spec: MelSpectrogram, noise_linear: np.ndarray) -> MelSpectrogram:
    linear = _to_linear(spec) + noise_linear
    peak = linear.max()
    if peak > 1.0:
        return _from_linear(spec, linear / peak)
    # no re-reference needed: pixels without noise keep their dB bit-exactly
    floor = spec.config.log_floor_db
    changed = noise_linear > 0.0
    data = spec.data.copy()
    data[changed] = np.minimum(
        10.0 * np.log10(np.maximum(linear[changed], 10.0 ** (floor / 10.0))), 0.0
    )
    return replace(spec, data=data)


def _noise_power(spec: MelSpectrogram, snr_db: float) -> float:
    return float(np.mean(_to_linear(spec))) / (10.0 ** (snr_db / 10.0))


def add_white_noise(
    spec: MelSpectrogram, rng: np.random.Generator, snr_db: tuple[float, float] = (3.0, 30.0)
) -> MelSpectrogram:
    """Flat-spectrum additive noise at a sampled SNR (linear power domain)."""
    power = _noise_power(spec, _sample_range(rng, snr_db))
    return _add_noise(spec, rng.exponential(power, size=spec.data.shape))


def add_pink_noise(
    spec: MelSpectrogram, rng: np.random.Generator, snr_db: tuple[float, float] = (3.0, 30.0)
) -> MelSpectrogram:
    """Additive noise with per-bin power proportional to 1/center_frequency."""
    centers = mel_center_frequencies(spec.config)
    weights = np.empty(spec.n_mels)
    weights[1:] = 1.0 / centers[1:]
    weights[0] = 1.0 / centers[1]  # bin 0 borrows bin 1's frequency
    weights /= weights.mean()
    power = _noise_power(spec, _sample_range(rng, snr_db))
    scale = power * weights[:, np.newaxis] * np.ones((1, spec.n_frames))
    return _add_noise(spec, rng.exponential(scale))


def add_bandpass_noise(
    spec: MelSpectrogram,
    rng: np.random.Generator,
    band: tuple[int, int],
    snr_db: tuple[float, float] = (3.0, 30.0),
) -> MelSpectrogram:
    """White noise restricted to an inclusive contiguous mel-bin band."""
    lo, hi = band
    if not (0 <= lo <= hi < spec.n_mels):
        raise ValueError(f"band ({lo}, {hi}) outside [0, {spec.n_mels - 1}]")
    power = _noise_power(spec, _sample_range(rng, snr_db))
    noise = np.zeros(spec.data.shape)
    noise[lo : hi + 1] = rng.exponential(power, size=(hi - lo + 1, spec.n_frames))
    return _add_noise(spec, noise)


def lower_upper_frequencies(
    spec: MelSpectrogram,
    rng: np.random.Generator,
    attenuation_db: tuple[float, float] = (3.0, 30.0),
) -> MelSpectrogram:
    """Ramp attenuation from a sampled cutoff bin up to the top bin.

    The dB reduction grows linearly from 0 at the cutoff to the sampled
    attenuation at the highest bin; results stay clamped at the floor.
    """
    attenuation = _sample_range(rng, attenuation_db)
    cutoff = int(rng.integers(0, spec.n_mels - 1))
    floor = spec.config.log_floor_db
    ramp = np.zeros(spec.n_mels)
    span = spec.n_mels - 1 - cutoff
    if span > 0:
        ramp[cutoff:] = attenuation * np.arange(span + 1) / span
    else:
        ramp[-1] = attenuation
    return replace(spec, data=np.maximum(spec.data - ramp[:, np.newaxis], floor))


def augment_pipeline(
    sample: LabeledSpectrogram,
    pool: Sequence[LabeledSpectrogram],
    config: AugmentConfig,
    rng: np.random.Generator,
) -> LabeledSpectrogram:
    """Apply the full chain in fixed order, each stage gated by its probability.

    The pool supplies mixing partners; with all probabilities zero the input
    comes back unchanged. Deterministic for a fixed rng state and pool order.
    """
    out = sample

    if pool and rng.uniform() < config.mix_probability:
        n_partners = int(rng.integers(1, 3)) if len(pool) >= 2 else 1  # 2 or 3 total
        idx = rng.choice(len(pool), size=n_partners, replace=False)
        out = mix([out, *(pool[i] for i in idx)], rng)

    if rng.uniform() < config.random_power_probability:
        out = replace(out, spec=random_power(out.spec, rng, config.random_power_range))

    if rng.uniform() < config.white_noise_probability:
        out = replace(out, spec=add_white_noise(out.spec, rng, config.white_noise_snr_db))

    if rng.uniform() < config.pink_noise_probability:
        out = replace(out, spec=add_pink_noise(out.spec, rng, config.pink_noise_snr_db))

    if rng.uniform() < config.bandpass_noise_probability:
        lo_w, hi_w = config.bandpass_width_bins
        width = int(rng.integers(lo_w, min(hi_w, out.spec.n_mels) + 1))
        start = int(rng.integers(0, out.spec.n_mels - width + 1))
        out = replace(
            out,
            spec=add_bandpass_noise(
                out.spec, rng, (start, start + width - 1), config.bandpass_snr_db
            ),
        )

    if rng.uniform() < config.lower_upper_probability:
        out = replace(
            out, spec=lower_upper_frequencies(out.spec, rng, config.upper_attenuation_db)
        )

    return out
