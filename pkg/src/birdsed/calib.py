"""Second-stage probability calibration.

Each (clip, 5-second frame, bird) tuple becomes one binary sample described
by four features: rolling means RM3 and RM9 of the 1-s-stride probability
stream, the clip-level maximum confidence, and the minimum Haversine distance
between the recording site and the bird's training occurrences. The bird's
identity is never a feature. Calibrators are a hand-rolled L2-regularized
logistic regression or a squared-hinge linear SVM with sigmoid output
calibration, both trained by full-batch gradient descent with a
Lipschitz-derived step size, validated leave-one-clip-out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .configio import dump_flat, load_flat
from .geo import OccurrenceTable, Site, min_haversine_distance
from .scoring import ClassVocabulary, FrameProbabilities

LABEL_STRIDE_S = 5

KINDS = ("logistic", "linear_svm")


class EmptyStreamError(ValueError):
    """No probability frames for a clip."""


class MissingFramesError(ValueError):
    """A clip's frame stream does not cover k = 5..n contiguously."""


class DegenerateLabelsError(ValueError):
    """Training set contains a single class."""


class TooFewClipsError(ValueError):
    """Leave-one-clip-out needs at least two clips."""


@dataclass(frozen=True)
class CalibrationSample:
    """One (clip, frame, bird) row; species is bookkeeping, never a feature."""

    clip_id: str
    end_second_k: int
    species: str
    rm3: float
    rm9: float
    clip_max: float
    min_haversine_km: float
    label: int | None = None

    def __post_init__(self) -> None:
        for name in ("rm3", "rm9", "clip_max"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.min_haversine_km < 0:
            raise ValueError("min_haversine_km must be >= 0")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError("label must be 0, 1, or None")


@dataclass(frozen=True)
class CalibratorModel:
    kind: str
    feature_means: tuple[float, ...]
    feature_stds: tuple[float, ...]
    weights: tuple[float, ...]
    bias: float
    log_distance: bool = True
    sigmoid_a: float = 0.0  # SVM output calibration: p = 1/(1 + exp(a*z + b))
    sigmoid_b: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if any(s <= 0 for s in self.feature_stds):
            raise ValueError("feature stds must be positive")


def rolling_mean(probs_by_k: Mapping[int, float], k: int, width: int) -> float:
    """Edge-clamped rolling mean of P over `width` neighboring frame indices.

    The window is k-half..k+half; indices missing from the stream (outside
    [5, n]) are dropped and the divisor is the count of those present.
    """
    half = width // 2
    values = [probs_by_k[i] for i in range(k - half, k + half + 1) if i in probs_by_k]
    if not values:
        raise EmptyStreamError(f"no frames near k={k}")
    return float(np.mean(values))


def clip_max(probs_by_k: Mapping[int, float]) -> float:
    """Maximum probability over every frame of the clip."""
    if not probs_by_k:
        raise EmptyStreamError("empty probability stream")
    return float(max(probs_by_k.values()))


def build_samples(
    frames: Sequence[FrameProbabilities],
    vocab: ClassVocabulary,
    site: Site,
    occ: OccurrenceTable,
    truth: Mapping[tuple[str, int], set[str]] | None = None,
    label_stride_s: int = LABEL_STRIDE_S,
) -> list[CalibrationSample]:
    """One sample per (clip, k in {5, 10, ..., n}, species).

    Frames must cover k = 5..n contiguously at 1-s stride for every clip.
    With truth given, label = 1 iff the species is in truth[(clip, k)].
    """
    by_clip: dict[str, list[FrameProbabilities]] = {}
    for f in frames:
        by_clip.setdefault(f.clip_id, []).append(f)

    distances = {
        s: min_haversine_distance(s, site, occ) for s in vocab.labels
    }

    samples: list[CalibrationSample] = []
    for clip_id in sorted(by_clip):
        clip_frames = sorted(by_clip[clip_id], key=lambda f: f.end_second_k)
        ks = [f.end_second_k for f in clip_frames]
        if ks[0] != 5 or ks != list(range(5, ks[-1] + 1)):
            raise MissingFramesError(f"{clip_id}: frames must cover k=5..n at 1-s stride")
        n = ks[-1]

        P = np.stack([f.probs for f in clip_frames])  # [n-4, |vocab|]
        if P.shape[1] != len(vocab):
            raise ValueError(f"{clip_id}: frame width {P.shape[1]} != vocabulary {len(vocab)}")
        cums = np.vstack([np.zeros((1, P.shape[1])), np.cumsum(P, axis=0)])
        maxima = P.max(axis=0)

        def window_mean(i: int, half: int) -> np.ndarray:
            lo = max(0, i - half)
            hi = min(P.shape[0] - 1, i + half)
            return (cums[hi + 1] - cums[lo]) / (hi + 1 - lo)

        for k in range(label_stride_s, n + 1, label_stride_s):
            i = k - 5
            rm3 = window_mean(i, 1)
            rm9 = window_mean(i, 4)
            row_truth = truth.get((clip_id, k), set()) if truth is not None else None
            for j, species in enumerate(vocab.labels):
                label = None if row_truth is None else int(species in row_truth)
                samples.append(
                    CalibrationSample(
                        clip_id=clip_id,
                        end_second_k=k,
                        species=species,
                        rm3=float(rm3[j]),
                        rm9=float(rm9[j]),
                        clip_max=float(maxima[j]),
                        min_haversine_km=distances[species],
                        label=label,
                    )
                )
    return samples


def _raw_features(samples: Sequence[CalibrationSample], log_distance: bool) -> np.ndarray:
    dist = np.array([s.min_haversine_km for s in samples])
    if log_distance:
        dist = np.log1p(dist)
    return np.column_stack(
        [
            [s.rm3 for s in samples],
            [s.rm9 for s in samples],
            [s.clip_max for s in samples],
            dist,
        ]
    )


def _labels(samples: Sequence[CalibrationSample]) -> np.ndarray:
    y = np.array([-1 if s.label is None else s.label for s in samples], dtype=np.float64)
    if (y < 0).any():
        raise ValueError("all training samples need labels")
    return y


def train_calibrator(
    samples: Sequence[CalibrationSample],
    kind: str = "logistic",
    l2_lambda: float = 1e-3,
    max_iters: int = 10000,
    tol: float = 1e-8,
    log_distance: bool = True,
    loss_history: list[float] | None = None,
) -> CalibratorModel:
    """Fit the binary calibrator by full-batch gradient descent.

    The step size is 1/L where L bounds the loss Hessian via the largest
    singular value of the design matrix, so descent never overshoots. The
    bias column is not regularized. Deterministic for fixed inputs.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if not samples:
        raise ValueError("no samples")
    y = _labels(samples)
    if len(np.unique(y)) < 2:
        raise DegenerateLabelsError("training labels are a single class")

    raw = _raw_features(samples, log_distance)
    means = raw.mean(axis=0)
    stds = raw.std(axis=0)
    stds[stds == 0.0] = 1.0
    X = (raw - means) / stds
    n = X.shape[0]

    aug = np.column_stack([X, np.ones(n)])
    sigma_max = float(np.linalg.svd(aug, compute_uv=False)[0])

    w = np.zeros(X.shape[1])
    b = 0.0

    if kind == "logistic":
        lipschitz = sigma_max**2 / (4.0 * n) + l2_lambda
        loss_grad = logistic_loss_grad
    else:
        lipschitz = 2.0 * sigma_max**2 / n + l2_lambda
        loss_grad = squared_hinge_loss_grad
    step = 1.0 / lipschitz

    for _ in range(max_iters):
        loss, grad_w, grad_b = loss_grad(w, b, X, y, l2_lambda)
        if loss_history is not None:
            loss_history.append(loss)
        if math.sqrt(float(grad_w @ grad_w) + grad_b**2) < tol:
            break
        w -= step * grad_w
        b -= step * grad_b

    if kind == "logistic":
        return CalibratorModel(
            kind=kind,
            feature_means=tuple(float(v) for v in means),
            feature_stds=tuple(float(v) for v in stds),
            weights=tuple(float(v) for v in w),
            bias=float(b),
            log_distance=log_distance,
        )

    decision = X @ w + b
    a_sig, b_sig = fit_platt_sigmoid(decision, y)
    return CalibratorModel(
        kind=kind,
        feature_means=tuple(float(v) for v in means),
        feature_stds=tuple(float(v) for v in stds),
        weights=tuple(float(v) for v in w),
        bias=float(b),
        log_distance=log_distance,
        sigmoid_a=float(a_sig),
        sigmoid_b=float(b_sig),
    )


def logistic_loss_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2_lambda: float
) -> tuple[float, np.ndarray, float]:
    """L2-regularized log loss (bias unpenalized) and its gradient."""
    n = X.shape[0]
    z = X @ w + b
    p = expit(z)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2_lambda * float(w @ w)
    grad_w = X.T @ (p - y) / n + l2_lambda * w
    grad_b = float(np.mean(p - y))
    return loss, grad_w, grad_b


def squared_hinge_loss_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2_lambda: float
) -> tuple[float, np.ndarray, float]:
    """Squared-hinge loss on y in {0,1} mapped to {-1,+1}; bias unpenalized."""
    n = X.shape[0]
    ypm = 2.0 * y - 1.0
    z = X @ w + b
    margin = np.maximum(0.0, 1.0 - ypm * z)
    loss = float(np.mean(margin**2)) + 0.5 * l2_lambda * float(w @ w)
    grad_z = -2.0 * ypm * margin / n
    grad_w = X.T @ grad_z + l2_lambda * w
    grad_b = float(grad_z.sum())
    return loss, grad_w, grad_b


def fit_platt_sigmoid(decision: np.ndarray, y: np.ndarray, max_iters: int = 100) -> tuple[float, float]:
    """Fit p = 1/(1 + exp(a*z + b)) to binary targets by Newton descent.

    Uses the standard regularized targets (N+ + 1)/(N+ + 2) and 1/(N- + 2)
    so the sigmoid never saturates on separable data.
    """
    n_pos = float(np.sum(y == 1))
    n_neg = float(len(y) - n_pos)
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))

    def objective(a_: float, b_: float) -> float:
        f = a_ * decision + b_
        # cross-entropy with p = sigmoid(-f), written stably
        return float(np.sum(np.logaddexp(0.0, -f) + t * f))

    prev = objective(a, b)
    for _ in range(max_iters):
        f = a * decision + b
        p = expit(-f)
        g = t - p  # d/df of the objective
        grad_a = float(np.sum(g * decision))
        grad_b = float(np.sum(g))
        h = p * (1.0 - p)
        h_aa = float(np.sum(h * decision * decision)) + 1e-12
        h_ab = float(np.sum(h * decision))
        h_bb = float(np.sum(h)) + 1e-12
        det = h_aa * h_bb - h_ab**2
        if det <= 0:
            break
        da = (h_bb * grad_a - h_ab * grad_b) / det
        db = (h_aa * grad_b - h_ab * grad_a) / det

        stepsize = 1.0
        while stepsize >= 1e-10:
            cand = objective(a - stepsize * da, b - stepsize * db)
            if cand < prev - 1e-15:
                a -= stepsize * da
                b -= stepsize * db
                prev = cand
                break
            stepsize /= 2.0
        else:
            break
        if math.hypot(grad_a, grad_b) < 1e-12:
            break
    return a, b


def predict_confidence(model: CalibratorModel, samples: Sequence[CalibrationSample]) -> np.ndarray:
    raw = _raw_features(samples, model.log_distance)
    X = (raw - np.asarray(model.feature_means)) / np.asarray(model.feature_stds)
    z = X @ np.asarray(model.weights) + model.bias
    if model.kind == "logistic":
        return expit(z)
    return expit(-(model.sigmoid_a * z + model.sigmoid_b))


def calibrate(
    model: CalibratorModel, samples: Sequence[CalibrationSample]
) -> dict[tuple[str, int, str], float]:
    """Calibrated confidence per (clip_id, end_second, species)."""
    conf = predict_confidence(model, samples)
    return {
        (s.clip_id, s.end_second_k, s.species): float(c) for s, c in zip(samples, conf)
    }


def leave_one_clip_out(
    samples: Sequence[CalibrationSample],
    kind: str = "logistic",
    l2_lambda: float = 1e-3,
    max_iters: int = 10000,
    tol: float = 1e-8,
    log_distance: bool = True,
) -> tuple[dict[tuple[str, int, str], float], dict[str, CalibratorModel]]:
    """Train on all clips but one, predict the held-out clip; repeat.

    Returns out-of-fold confidences covering every sample exactly once plus
    the per-fold models keyed by held-out clip. Clip order never matters.
    """
    clips = sorted({s.clip_id for s in samples})
    if len(clips) < 2:
        raise TooFewClipsError(f"need >= 2 clips, got {len(clips)}")

    oof: dict[tuple[str, int, str], float] = {}
    models: dict[str, CalibratorModel] = {}
    for held in clips:
        train = [s for s in samples if s.clip_id != held]
        test = [s for s in samples if s.clip_id == held]
        model = train_calibrator(
            train,
            kind=kind,
            l2_lambda=l2_lambda,
            max_iters=max_iters,
            tol=tol,
            log_distance=log_distance,
        )
        models[held] = model
        oof.update(calibrate(model, test))
    return oof, models


MODEL_VERSION = 1


def save_model(path: str | Path, model: CalibratorModel) -> None:
    dump_flat(
        {
            "calibrator_version": MODEL_VERSION,
            "kind": model.kind,
            "log_distance": model.log_distance,
            "feature_means": model.feature_means,
            "feature_stds": model.feature_stds,
            "weights": model.weights,
            "bias": model.bias,
            "sigmoid_a": model.sigmoid_a,
            "sigmoid_b": model.sigmoid_b,
        },
        path,
    )


def load_model(path: str | Path) -> CalibratorModel:
    raw = load_flat(path)
    version = int(raw.get("calibrator_version", "-1"))
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported calibrator version {version}")
    parse_tuple = lambda text: tuple(float(v) for v in text.split(","))
    return CalibratorModel(
        kind=raw["kind"],
        feature_means=parse_tuple(raw["feature_means"]),
        feature_stds=parse_tuple(raw["feature_stds"]),
        weights=parse_tuple(raw["weights"]),
        bias=float(raw["bias"]),
        log_distance=raw["log_distance"].lower() == "true",
        sigmoid_a=float(raw["sigmoid_a"]),
        sigmoid_b=float(raw["sigmoid_b"]),
    )


SAMPLES_CSV_HEADER = ["clip_id", "end_second", "species", "rm3", "rm9", "clip_max", "min_hav_km", "label"]


def write_samples_csv(path: str | Path, samples: Sequence[CalibrationSample]) -> None:
    """Audit dump of calibration samples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLES_CSV_HEADER)
        for s in samples:
            writer.writerow(
                [
                    s.clip_id,
                    s.end_second_k,
                    s.species,
                    f"{s.rm3:.8g}",
                    f"{s.rm9:.8g}",
                    f"{s.clip_max:.8g}",
                    f"{s.min_haversine_km:.8g}",
                    "" if s.label is None else s.label,
                ]
            )


def read_samples_csv(path: str | Path) -> list[CalibrationSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SAMPLES_CSV_HEADER:
            raise ValueError(f"{Path(path).name}: unexpected header {header}")
        out = []
        for row in reader:
            if not row:
                continue
            out.append(
                CalibrationSample(
                    clip_id=row[0],
                    end_second_k=int(row[1]),
                    species=row[2],
                    rm3=float(row[3]),
                    rm9=float(row[4]),
                    clip_max=float(row[5]),
                    min_haversine_km=float(row[6]),
                    label=None if row[7] == "" else int(row[7]),
                )
            )
    return out
