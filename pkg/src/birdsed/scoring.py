"""Per-frame class probabilities: scorers, sliding windows, ensembling.

The probability stream P_k is produced by scoring 5-second windows at a
1-second stride over a clip's spectrogram. Scorers are pluggable: precomputed
CSV streams, a small trainable linear model, and a template matcher all
satisfy the same interface; ensembles are weighted averages with weights
found by coordinate ascent on a validation objective.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.special import expit

from .audio_io import AudioClip
from .augment import LabeledSpectrogram
from .spectro import MelConfig, MelSpectrogram, compute_logmel, mel_filterbank

DEFAULT_WINDOW_S = 5
DEFAULT_STRIDE_S = 1


class ClipTooShortError(ValueError):
    """Clip shorter than one scoring window."""


class MisalignedStreamsError(ValueError):
    """Ensemble inputs disagree on (clip_id, end_second) coverage."""


class SchemaError(ValueError):
    """Probability CSV header is missing required columns."""


class RangeError(ValueError):
    """Probability outside [0, 1]."""


class EmptyDatasetError(ValueError):
    """No training samples supplied."""


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered species labels; "nocall" is derived downstream, never a class."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("vocabulary labels must be unique")
        if "nocall" in self.labels:
            raise ValueError('"nocall" is not a species class')
        if not self.labels:
            raise ValueError("vocabulary must be non-empty")
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        return self._index[label]


@dataclass(frozen=True)
class FrameProbabilities:
    """Probability vector for the window ending at second k of a clip."""

    clip_id: str
    end_second_k: int
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise ValueError("probs must be a vector")
        if probs.size and ((probs < 0).any() or (probs > 1).any()):
            raise RangeError(f"probabilities outside [0,1] at {self.clip_id} k={self.end_second_k}")


class Scorer(Protocol):
    vocab: ClassVocabulary

    def score(self, window: MelSpectrogram) -> np.ndarray: ...


@dataclass(frozen=True)
class EnsembleWeights:
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if not w:
            raise ValueError("need at least one weight")
        if any(x < 0 for x in w):
            raise ValueError("weights must be non-negative")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(w)}")


def window_count(duration_s: float, window_s: int = DEFAULT_WINDOW_S) -> int:
    """Number of 1-s-stride windows: floor(duration) - window + 1."""
    return max(0, int(math.floor(duration_s)) - window_s + 1)


def slice_window(
    spec: MelSpectrogram, end_second: int, window_s: int = DEFAULT_WINDOW_S
) -> MelSpectrogram:
    """Cut the [k - window, k] second window out of a clip-level spectrogram.

    Frames stay referenced to the clip-level maximum; windows are views into
    the same dB surface, which keeps interior values translation-covariant.
    """
    fps = spec.config.frames_per_second
    if fps != int(fps):
        raise ValueError("frames_per_second must be integral for window slicing")
    fps = int(fps)
    start = (end_second - window_s) * fps
    stop = end_second * fps
    if start < 0 or stop > spec.n_frames:
        raise ValueError(f"window [{end_second - window_s}, {end_second}] s outside clip")
    return MelSpectrogram(
        clip_id=spec.clip_id,
        start_offset_s=spec.start_offset_s + (end_second - window_s),
        data=spec.data[:, start:stop],
        config=spec.config,
    )


def sliding_window_inference(
    clip: AudioClip,
    scorer: Scorer,
    window_s: int = DEFAULT_WINDOW_S,
    stride_s: int = DEFAULT_STRIDE_S,
    config: MelConfig | None = None,
) -> list[FrameProbabilities]:
    """Score every window ending at k = window_s, window_s + stride, ... floor(duration).

    The spectrogram is computed once per clip and sliced per window.
    """
    if window_s <= 0 or stride_s <= 0:
        raise ValueError("window_s and stride_s must be positive")
    if clip.duration_s < window_s:
        raise ClipTooShortError(
            f"{clip.clip_id}: {clip.duration_s:.2f} s is shorter than a {window_s} s window"
        )
    config = config or MelConfig()
    spec = compute_logmel(clip, config)
    return score_spectrogram(spec, scorer, window_s=window_s, stride_s=stride_s)


def score_spectrogram(
    spec: MelSpectrogram,
    scorer: Scorer,
    window_s: int = DEFAULT_WINDOW_S,
    stride_s: int = DEFAULT_STRIDE_S,
) -> list[FrameProbabilities]:
    """Sliding-window scoring over an already-computed clip spectrogram."""
    fps = int(spec.config.frames_per_second)
    duration = (spec.n_frames - 1) // fps  # spectrogram has 1 + n//hop frames
    out: list[FrameProbabilities] = []
    for k in range(window_s, duration + 1, stride_s):
        window = slice_window(spec, k, window_s)
        probs = np.asarray(scorer.score(window), dtype=np.float64)
        out.append(FrameProbabilities(clip_id=spec.clip_id, end_second_k=k, probs=probs))
    return out


def ensemble_average(
    streams: Sequence[Sequence[FrameProbabilities]], w: EnsembleWeights
) -> list[FrameProbabilities]:
    """Weighted per-frame average of aligned probability streams."""
    if len(streams) != len(w.weights):
        raise MisalignedStreamsError(
            f"{len(streams)} streams but {len(w.weights)} weights"
        )
    if not streams:
        return []
    first = streams[0]
    for s in streams[1:]:
        if len(s) != len(first):
            raise MisalignedStreamsError("streams differ in frame count")
        for a, b in zip(first, s):
            if (a.clip_id, a.end_second_k) != (b.clip_id, b.end_second_k):
                raise MisalignedStreamsError(
                    f"frame mismatch: {(a.clip_id, a.end_second_k)} vs {(b.clip_id, b.end_second_k)}"
                )
            if a.probs.shape != b.probs.shape:
                raise MisalignedStreamsError("streams differ in class count")

    out = []
    for i, frame in enumerate(first):
        acc = np.zeros_like(frame.probs)
        for wi, s in zip(w.weights, streams):
            acc += wi * s[i].probs
        out.append(
            FrameProbabilities(
                clip_id=frame.clip_id,
                end_second_k=frame.end_second_k,
                probs=np.clip(acc, 0.0, 1.0),
            )
        )
    return out


WEIGHT_GRID_STEP = 0.05


def optimize_ensemble_weights(
    streams: Sequence[Sequence[FrameProbabilities]],
    ground_truth,
    objective: Callable[[Sequence[FrameProbabilities], object], float],
    max_passes: int = 10,
) -> EnsembleWeights:
    """Coordinate ascent on the simplex, grid step 0.05 per coordinate.

    Starts from uniform weights. For each coordinate in index order, candidate
    values v set that weight and rescale the rest to keep the sum at 1; only
    strict improvements are accepted, so ties resolve toward lower stream
    index. Deterministic throughout.
    """
    n = len(streams)
    if n == 0:
        raise ValueError("need at least one stream")
    if n == 1:
        return EnsembleWeights((1.0,))

    def evaluate(w: np.ndarray) -> float:
        frames = ensemble_average(streams, EnsembleWeights(tuple(w)))
        return objective(frames, ground_truth)

    w = np.full(n, 1.0 / n)
    best = evaluate(w)
    grid = np.round(np.arange(0.0, 1.0 + WEIGHT_GRID_STEP / 2, WEIGHT_GRID_STEP), 10)

    for _ in range(max_passes):
        improved = False
        for i in range(n):
            for v in grid:
                cand = _set_coordinate(w, i, float(v))
                if cand is None:
                    continue
                score = evaluate(cand)
                if score > best + 1e-12:
                    best, w, improved = score, cand, True
        if not improved:
            break
    return EnsembleWeights(tuple(np.round(w, 12)))


def _set_coordinate(w: np.ndarray, i: int, v: float) -> np.ndarray | None:
    """Set w[i] = v, rescaling the other coordinates to preserve the sum."""
    out = w.copy()
    rest = 1.0 - w[i]
    if rest <= 0.0:
        out[:] = (1.0 - v) / (len(w) - 1)
    else:
        out *= (1.0 - v) / rest
    out[i] = v
    if (out < -1e-12).any():
        return None
    return np.clip(out, 0.0, 1.0)


def cosine_lr(t: int, total: int, base_lr: float = 0.001, eta_min: float = 0.0) -> float:
    """Cosine annealing: eta(t) = eta_min + (base - eta_min)(1 + cos(pi t/T))/2."""
    if total <= 0:
        raise ValueError("total must be positive")
    return eta_min + 0.5 * (base_lr - eta_min) * (1.0 + math.cos(math.pi * t / total))


def smoothed_bce_loss(
    logits: np.ndarray, targets: np.ndarray, eps: float
) -> tuple[float, np.ndarray]:
    """Label-smoothed binary cross entropy and its gradient w.r.t. logits.

    Targets are smoothed as y' = y(1 - eps) + eps/2; the mean is taken over
    every (sample, class) cell. Uses the numerically stable log-sum form.
    """
    y = targets * (1.0 - eps) + eps / 2.0
    # log(1 + e^z) computed stably
    softplus = np.logaddexp(0.0, logits)
    loss = float(np.mean(softplus - y * logits))
    p = expit(logits)
    grad = (p - y) / logits.size
    return loss, grad


@dataclass
class LinearScorer:
    """Per-class logistic model over mean-pooled, standardized mel features."""

    vocab: ClassVocabulary
    weights: np.ndarray  # [n_classes, n_mels]
    bias: np.ndarray  # [n_classes]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    def score(self, window: MelSpectrogram) -> np.ndarray:
        f = (window.data.mean(axis=1) - self.feature_mean) / self.feature_std
        z = self.weights @ f + self.bias
        return expit(z)


def train_linear_scorer(
    dataset: Sequence[LabeledSpectrogram],
    epochs: int = 200,
    base_lr: float = 0.001,
    label_smoothing_eps: float = 0.05,
) -> LinearScorer:
    """Full-batch gradient descent with cosine-annealed learning rate.

    Dataset items are LabeledSpectrograms; the class list is the sorted union
    of their labels. Deterministic: zero-initialized weights, fixed schedule.
    """
    if not dataset:
        raise EmptyDatasetError("no training samples")
    labels = sorted(set().union(*(s.labels for s in dataset)))
    vocab = ClassVocabulary(tuple(labels))

    X = np.stack([s.spec.data.mean(axis=1) for s in dataset])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    X = (X - mean) / std

    Y = np.zeros((len(dataset), len(vocab)))
    for r, s in enumerate(dataset):
        for lab in s.labels:
            Y[r, vocab.index(lab)] = 1.0

    W = np.zeros((len(vocab), X.shape[1]))
    b = np.zeros(len(vocab))
    history: list[float] = []
    for t in range(epochs):
        logits = X @ W.T + b
        loss, grad = smoothed_bce_loss(logits, Y, label_smoothing_eps)
        history.append(loss)
        lr = cosine_lr(t, epochs, base_lr)
        W -= lr * (grad.T @ X)
        b -= lr * grad.sum(axis=0)

    return LinearScorer(
        vocab=vocab,
        weights=W,
        bias=b,
        feature_mean=mean,
        feature_std=std,
        loss_history=history,
    )


@dataclass(frozen=True)
class TemplateScorer:
    """Cosine-similarity matcher against per-class mel power profiles.

    A stand-in scorer for controlled experiments: each class is represented
    by its expected linear-power mel profile; a window scores as the clipped
    cosine similarity between its own mean profile and each template.
    """

    vocab: ClassVocabulary
    templates: np.ndarray  # [n_classes, n_mels], non-negative

    def __post_init__(self) -> None:
        t = np.asarray(self.templates, dtype=np.float64)
        object.__setattr__(self, "templates", t)
        if t.shape[0] != len(self.vocab):
            raise ValueError("one template per class required")
        norms = np.linalg.norm(t, axis=1)
        if (norms == 0).any():
            raise ValueError("templates must be non-zero")

    @classmethod
    def from_tone_frequencies(
        cls, vocab: ClassVocabulary, freqs_hz: Sequence[float], config: MelConfig | None = None
    ) -> "TemplateScorer":
        """Templates for pure-tone classes: the filterbank response at each tone."""
        config = config or MelConfig()
        fb = mel_filterbank(config)
        templates = np.empty((len(vocab), config.n_mels))
        for i, f in enumerate(freqs_hz):
            bin_idx = int(round(f * config.n_fft / config.sample_rate_hz))
            templates[i] = fb[:, bin_idx]
        return cls(vocab=vocab, templates=templates)

    def score(self, window: MelSpectrogram) -> np.ndarray:
        profile = (10.0 ** (window.data / 10.0)).mean(axis=1)
        norm = np.linalg.norm(profile)
        if norm == 0.0:
            return np.zeros(len(self.vocab))
        sims = (self.templates @ profile) / (np.linalg.norm(self.templates, axis=1) * norm)
        return np.clip(sims, 0.0, 1.0)


def load_precomputed_scores(path: str | Path) -> tuple[list[FrameProbabilities], ClassVocabulary]:
    """Parse a probability CSV; frames come back sorted by (clip_id, k)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name}: empty file") from None
        if header[:2] != ["clip_id", "end_second"]:
            raise SchemaError(f"{path.name}: header must start with clip_id,end_second")
        class_labels = header[2:]
        if not class_labels:
            raise SchemaError(f"{path.name}: no class columns")
        vocab = ClassVocabulary(tuple(class_labels))

        frames = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path.name}: row width {len(row)} != header {len(header)}")
            probs = np.array([float(v) for v in row[2:]])
            if (probs < 0).any() or (probs > 1).any():
                raise RangeError(f"{path.name}: probability outside [0,1] in clip {row[0]}")
            frames.append(
                FrameProbabilities(clip_id=row[0], end_second_k=int(row[1]), probs=probs)
            )
    frames.sort(key=lambda f: (f.clip_id, f.end_second_k))
    return frames, vocab


def write_probability_csv(
    path: str | Path, frames: Sequence[FrameProbabilities], vocab: ClassVocabulary
) -> None:
    """Emit the probability CSV: clip_id,end_second,<classes>; 8 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["clip_id", "end_second", *vocab.labels])
        for f in sorted(frames, key=lambda f: (f.clip_id, f.end_second_k)):
            writer.writerow([f.clip_id, f.end_second_k, *(f"{p:.8g}" for p in f.probs)])


class ScorerLoadError(ValueError):
    """A scorer model file is missing fields or malformed."""


def save_scorer(path: str | Path, scorer: "LinearScorer | TemplateScorer") -> None:
    """Persist a scorer as an npz archive with a kind tag."""
    if isinstance(scorer, LinearScorer):
        payload = dict(
            kind="linear",
            labels=np.array(scorer.vocab.labels),
            weights=scorer.weights,
            bias=scorer.bias,
            feature_mean=scorer.feature_mean,
            feature_std=scorer.feature_std,
        )
    elif isinstance(scorer, TemplateScorer):
        payload = dict(
            kind="template",
            labels=np.array(scorer.vocab.labels),
            templates=scorer.templates,
        )
    else:
        raise TypeError(f"cannot save scorer of type {type(scorer).__name__}")
    with open(path, "wb") as fh:  # keep the exact path, np.savez appends .npz
        np.savez(fh, **payload)


def load_scorer(path: str | Path) -> "LinearScorer | TemplateScorer":
    """Load a scorer saved by save_scorer; raises ScorerLoadError on problems."""
    try:
        with np.load(path, allow_pickle=False) as data:
            kind = str(data["kind"])
            labels = tuple(str(v) for v in data["labels"])
            vocab = ClassVocabulary(labels)
            if kind == "linear":
                return LinearScorer(
                    vocab=vocab,
                    weights=np.array(data["weights"]),
                    bias=np.array(data["bias"]),
                    feature_mean=np.array(data["feature_mean"]),
                    feature_std=np.array(data["feature_std"]),
                )
            if kind == "template":
                return TemplateScorer(vocab=vocab, templates=np.array(data["templates"]))
            raise ScorerLoadError(f"{path}: unknown scorer kind {kind!r}")
    except ScorerLoadError:
        raise
    except OSError:
        raise
    except Exception as exc:
        raise ScorerLoadError(f"{path}: not a readable scorer file ({exc})") from exc
