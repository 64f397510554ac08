"""Row-wise micro F1, call/nocall split scores, site-weighted composites,
and the exhaustive dual-threshold sweep."""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .postproc import NOCALL_LABEL, PostprocConfig, PredictionRow, assemble_row

HNVS_NOCALL_WEIGHT = 0.63
HNVS_CALL_WEIGHT = 0.37
LNVS_NOCALL_WEIGHT = 0.54
LNVS_CALL_WEIGHT = 0.46


class EmptyLabelSetError(ValueError):
    """A prediction or truth label set is empty."""


class RowMismatchError(ValueError):
    """Prediction and truth row ids do not align."""


@dataclass(frozen=True)
class MetricReport:
    """Scores for one evaluation run."""

    f1_overall: float
    f1_call: float
    f1_nocall: float
    hnvs: float
    lnvs: float

    def __post_init__(self) -> None:
        for name in ("f1_overall", "f1_call", "f1_nocall", "hnvs", "lnvs"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_f1s(cls, f1_overall: float, f1_call: float, f1_nocall: float) -> "MetricReport":
        return cls(
            f1_overall=f1_overall,
            f1_call=f1_call,
            f1_nocall=f1_nocall,
            hnvs=HNVS_NOCALL_WEIGHT * f1_nocall + HNVS_CALL_WEIGHT * f1_call,
            lnvs=LNVS_NOCALL_WEIGHT * f1_nocall + LNVS_CALL_WEIGHT * f1_call,
        )


def row_f1(pred: frozenset[str] | set[str], truth: frozenset[str] | set[str]) -> float:
    """Micro F1 of one row: 2|pred & truth| / (|pred| + |truth|)."""
    if not pred or not truth:
        raise EmptyLabelSetError("label sets must be non-empty")
    return 2.0 * len(set(pred) & set(truth)) / (len(pred) + len(truth))


def evaluate(
    predictions: Iterable[PredictionRow],
    truth: Iterable[PredictionRow],
    global_micro: bool = False,
) -> MetricReport:
    """Score predictions against truth rows with matching ids.

    Rows split by their truth labels: the call split holds rows with at
    least one bird, the nocall split rows whose truth is exactly
    {"nocall"}. An empty split scores 0. With global_micro the per-split
    scores pool intersection and set sizes over rows instead of
    averaging per-row F1.
    """
    pred_map = {row.row_id: row.labels for row in predictions}
    truth_map = {row.row_id: row.labels for row in truth}
    if pred_map.keys() != truth_map.keys():
        missing = truth_map.keys() ^ pred_map.keys()
        sample = sorted(missing)[:3]
        raise RowMismatchError(f"row ids differ on {len(missing)} rows, e.g. {sample}")

    overall: list[tuple[int, int, int]] = []  # (intersection, |pred|, |truth|)
    call: list[tuple[int, int, int]] = []
    nocall: list[tuple[int, int, int]] = []
    for row_id, t_labels in truth_map.items():
        p_labels = pred_map[row_id]
        if not t_labels:
            raise EmptyLabelSetError(f"empty truth labels for {row_id}")
        counts = (len(p_labels & t_labels), len(p_labels), len(t_labels))
        overall.append(counts)
        if t_labels - {NOCALL_LABEL}:
            call.append(counts)
        elif t_labels == {NOCALL_LABEL}:
            nocall.append(counts)
    scorer = _global_micro_f1 if global_micro else _mean_row_f1
    return MetricReport.from_f1s(scorer(overall), scorer(call), scorer(nocall))


def _mean_row_f1(counts: list[tuple[int, int, int]]) -> float:
    if not counts:
        return 0.0
    return float(np.mean([2.0 * i / (p + t) for i, p, t in counts]))


def _global_micro_f1(counts: list[tuple[int, int, int]]) -> float:
    if not counts:
        return 0.0
    inter = sum(i for i, _, _ in counts)
    sizes = sum(p + t for _, p, t in counts)
    return 2.0 * inter / sizes


def sweep_thresholds(
    confidences: Mapping[tuple[str, int, str], float],
    site_id: str,
    truth: Iterable[PredictionRow],
    grid_step: float = 0.01,
    base_cfg: PostprocConfig | None = None,
    global_micro: bool = False,
) -> tuple[float, float, MetricReport]:
    """Exhaustive 2-D grid search over (bird, nocall) thresholds.

    Maximizes f1_overall; ties break toward the higher bird threshold,
    then the higher nocall threshold. Confidences must already be fully
    cleaned (rejection and boost applied); thresholding is re-run per
    grid point. Returns the winning pair and its full report.
    """
    if not confidences:
        raise ValueError("confidences must be non-empty")
    if not 0.0 < grid_step <= 1.0:
        raise ValueError("grid_step must lie in (0, 1]")
    truth_rows = list(truth)
    base = base_cfg if base_cfg is not None else PostprocConfig()

    frames: dict[tuple[str, int], dict[str, float]] = {}
    for (clip_id, end_second, species), value in confidences.items():
        frames.setdefault((clip_id, end_second), {})[species] = value
    frame_keys = sorted(frames)
    species_order = sorted({s for _, _, s in confidences})
    truth_map = {row.row_id: row.labels for row in truth_rows}
    row_ids = [f"{c}_{site_id}_{k}" for c, k in frame_keys]
    if set(row_ids) != set(truth_map):
        missing = set(row_ids) ^ set(truth_map)
        raise RowMismatchError(f"row ids differ on {len(missing)} rows")

    conf = np.array(
        [[frames[key].get(s, 0.0) for s in species_order] for key in frame_keys]
    )
    truth_birds = np.array(
        [[s in truth_map[rid] for s in species_order] for rid in row_ids]
    )
    truth_has_nocall = np.array([NOCALL_LABEL in truth_map[rid] for rid in row_ids])
    truth_size = np.array([len(truth_map[rid]) for rid in row_ids])
    nocall_conf = 1.0 - conf.max(axis=1)
    is_call_row = np.array(
        [bool(truth_map[rid] - {NOCALL_LABEL}) for rid in row_ids]
    )
    is_nocall_row = np.array([truth_map[rid] == {NOCALL_LABEL} for rid in row_ids])

    grid = np.round(np.arange(0.0, 1.0 + grid_step / 2, grid_step), 10)
    best_score = -1.0
    best_pair = (0.0, 0.0)
    for bird_thr in grid:
        pred_birds = conf >= bird_thr
        n_birds = pred_birds.sum(axis=1)
        tp_birds = (pred_birds & truth_birds).sum(axis=1)
        # rows x nocall-grid: predicted nocall, with the empty-row fallback
        pred_nocall = (nocall_conf[:, None] >= grid[None, :]) | (n_birds == 0)[:, None]
        inter = tp_birds[:, None] + (pred_nocall & truth_has_nocall[:, None])
        sizes = n_birds[:, None] + pred_nocall + truth_size[:, None]
        if global_micro:
            scores = 2.0 * inter.sum(axis=0) / sizes.sum(axis=0)
        else:
            scores = (2.0 * inter / sizes).mean(axis=0)
        local = float(scores.max())
        # prefer the highest nocall threshold among equal scores
        m_idx = int(np.flatnonzero(scores == local).max())
        if local > best_score or (local == best_score and bird_thr >= best_pair[0]):
            best_score = local
            best_pair = (float(bird_thr), float(grid[m_idx]))

    cfg = PostprocConfig(
        max_distance_km=base.max_distance_km,
        min_raw_prob=base.min_raw_prob,
        species_blacklist=base.species_blacklist,
        frequent_bird_boost=base.frequent_bird_boost,
        frequent_birds_per_site=base.frequent_birds_per_site,
        bird_threshold=best_pair[0],
        nocall_threshold=best_pair[1],
    )
    rows = [
        assemble_row(clip_id, site_id, end_second, frames[(clip_id, end_second)], cfg)
        for clip_id, end_second in frame_keys
    ]
    report = evaluate(rows, truth_rows, global_micro=global_micro)
    return best_pair[0], best_pair[1], report


def format_report(report: MetricReport) -> str:
    """Human-readable aligned table."""
    lines = ["metric      value", "-----------------"]
    for name in ("f1_overall", "f1_call", "f1_nocall", "hnvs", "lnvs"):
        lines.append(f"{name:<11} {getattr(report, name):.6f}")
    return "\n".join(lines)


def write_report_csv(path: str | Path, report: MetricReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name in ("f1_overall", "f1_call", "f1_nocall", "hnvs", "lnvs"):
            writer.writerow([name, f"{getattr(report, name):.8g}"])


def read_report_csv(path: str | Path) -> MetricReport:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["metric", "value"]:
            raise ValueError(f"{path}: expected header metric,value")
        values = {name: float(value) for name, value in reader}
    return MetricReport(**values)
