"""Rule-based cleanup of calibrated confidences and prediction-row assembly.

Three rules run in a fixed order: geographic and raw-probability rejection
first, then the per-site frequent-bird boost, then dual thresholding into
rows that may contain bird labels, "nocall", or both.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .geo import OccurrenceTable, Site, UnknownSpeciesError, haversine_km, min_haversine_distance

# (clip_id, end_second, species) -> confidence
ConfidenceKey = tuple[str, int, str]

NOCALL_LABEL = "nocall"

DEFAULT_BLACKLIST = frozenset({"grhowl", "plupig2"})


class MisalignedConfidencesError(ValueError):
    """Calibrated and raw confidence tables cover different keys."""


@dataclass(frozen=True)
class PostprocConfig:
    """Thresholds and per-site tables for the cleanup rules."""

    max_distance_km: float = 100.0
    min_raw_prob: float = 0.01
    species_blacklist: frozenset[str] = DEFAULT_BLACKLIST
    frequent_bird_boost: float = 0.1
    frequent_birds_per_site: Mapping[str, frozenset[str]] = field(default_factory=dict)
    bird_threshold: float = 0.5
    nocall_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.max_distance_km <= 0:
            raise ValueError("max_distance_km must be positive")
        if not 0.0 <= self.min_raw_prob <= 1.0:
            raise ValueError("min_raw_prob must lie in [0, 1]")
        if self.frequent_bird_boost < 0:
            raise ValueError("frequent_bird_boost must be non-negative")
        for name in ("bird_threshold", "nocall_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        object.__setattr__(self, "species_blacklist", frozenset(self.species_blacklist))
        object.__setattr__(
            self,
            "frequent_birds_per_site",
            {site: frozenset(names) for site, names in self.frequent_birds_per_site.items()},
        )


@dataclass(frozen=True)
class PredictionRow:
    """One submission row: an id and a non-empty label set."""

    row_id: str
    labels: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", frozenset(self.labels))
        if not self.labels:
            raise ValueError("row labels must be non-empty")
        if any(not label for label in self.labels):
            raise ValueError("labels must be non-empty strings")


def format_row_id(clip_id: str, site_id: str, end_second_k: int) -> str:
    return f"{clip_id}_{site_id}_{end_second_k}"


def parse_row_id(row_id: str) -> tuple[str, str, int]:
    """Split a row id back into (clip_id, site_id, end_second)."""
    parts = row_id.rsplit("_", 2)
    if len(parts) != 3 or not parts[0] or not parts[1]:
        raise ValueError(f"malformed row_id: {row_id!r}")
    try:
        end_second = int(parts[2])
    except ValueError:
        raise ValueError(f"malformed row_id: {row_id!r}") from None
    return parts[0], parts[1], end_second


def apply_fp_reduction(
    calibrated: Mapping[ConfidenceKey, float],
    raw: Mapping[ConfidenceKey, float],
    site: Site,
    occurrences: OccurrenceTable,
    cfg: PostprocConfig,
) -> dict[ConfidenceKey, float]:
    """Zero out confidences that fail any of the rejection rules.

    An entry is rejected when the species has never been recorded within
    max_distance_km of the site, when the raw ensemble probability is
    below min_raw_prob, or when the species is blacklisted. Species with
    no known occurrences at all count as infinitely distant.
    """
    if calibrated.keys() != raw.keys():
        raise MisalignedConfidencesError("calibrated and raw tables cover different keys")
    distances: dict[str, float] = {}
    for _, _, species in calibrated:
        if species in distances:
            continue
        try:
            distances[species] = min_haversine_distance(species, site, occurrences)
        except UnknownSpeciesError:
            distances[species] = math.inf
    out: dict[ConfidenceKey, float] = {}
    for key, confidence in calibrated.items():
        species = key[2]
        rejected = (
            distances[species] > cfg.max_distance_km
            or raw[key] < cfg.min_raw_prob
            or species in cfg.species_blacklist
        )
        out[key] = 0.0 if rejected else confidence
    return out


def apply_fn_reduction(
    calibrated: Mapping[ConfidenceKey, float],
    site: Site,
    cfg: PostprocConfig,
) -> dict[ConfidenceKey, float]:
    """Boost confidences of the site's frequent species, clamped to 1."""
    frequent = cfg.frequent_birds_per_site.get(site.site_id, frozenset())
    boost = cfg.frequent_bird_boost
    return {
        key: min(1.0, value + boost) if key[2] in frequent else value
        for key, value in calibrated.items()
    }


def nocall_confidence(confidences: Mapping[str, float]) -> float:
    """Confidence that a frame holds no call: one minus the best bird."""
    if not confidences:
        raise ValueError("frame confidences must be non-empty")
    return 1.0 - max(confidences.values())


def assemble_row(
    clip_id: str,
    site_id: str,
    end_second_k: int,
    confidences: Mapping[str, float],
    cfg: PostprocConfig,
) -> PredictionRow:
    """Threshold one frame's confidences into a prediction row.

    Birds at or above bird_threshold are kept; "nocall" joins them when
    the nocall confidence reaches nocall_threshold; an otherwise empty
    row falls back to {"nocall"}.
    """
    if end_second_k <= 0 or end_second_k % 5 != 0:
        raise ValueError("end_second_k must be a positive multiple of 5")
    labels = {s for s, c in confidences.items() if c >= cfg.bird_threshold}
    if nocall_confidence(confidences) >= cfg.nocall_threshold:
        labels.add(NOCALL_LABEL)
    if not labels:
        labels = {NOCALL_LABEL}
    return PredictionRow(format_row_id(clip_id, site_id, end_second_k), frozenset(labels))


def postprocess_confidences(
    calibrated: Mapping[ConfidenceKey, float],
    raw: Mapping[ConfidenceKey, float],
    site: Site,
    occurrences: OccurrenceTable,
    cfg: PostprocConfig,
) -> list[PredictionRow]:
    """Full cleanup: reject, then boost, then threshold every frame.

    The order is fixed; swapping rejection and boost changes results for
    species that are both frequent at the site and rejected by a rule.
    """
    cleaned = apply_fp_reduction(calibrated, raw, site, occurrences, cfg)
    boosted = apply_fn_reduction(cleaned, site, cfg)
    frames: dict[tuple[str, int], dict[str, float]] = {}
    for (clip_id, end_second, species), value in boosted.items():
        frames.setdefault((clip_id, end_second), {})[species] = value
    return [
        assemble_row(clip_id, site.site_id, end_second, confidences, cfg)
        for (clip_id, end_second), confidences in sorted(frames.items())
    ]


def frequent_birds(
    occurrences: OccurrenceTable,
    sites: Iterable[Site],
    top_n: int = 10,
    max_distance_km: float = 100.0,
) -> dict[str, frozenset[str]]:
    """Top species per site by occurrence count within max_distance_km.

    Ties break toward the alphabetically earlier species; species with no
    nearby occurrences never qualify.
    """
    if top_n <= 0:
        raise ValueError("top_n must be positive")
    out: dict[str, frozenset[str]] = {}
    for site in sites:
        ranked: list[tuple[int, str]] = []
        for species in sorted(occurrences.points):
            nearby = sum(
                1
                for point in occurrences.points[species]
                if haversine_km(point, site.location) <= max_distance_km
            )
            if nearby > 0:
                ranked.append((-nearby, species))
        ranked.sort()
        out[site.site_id] = frozenset(species for _, species in ranked[:top_n])
    return out


def write_submission(path: str | Path, rows: Iterable[PredictionRow]) -> None:
    """Write rows as `row_id,birds` with space-separated labels, sorted."""
    ordered = sorted(rows, key=lambda r: _sort_key(r.row_id))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_id", "birds"])
        for row in ordered:
            writer.writerow([row.row_id, " ".join(sorted(row.labels))])


def read_submission(path: str | Path) -> list[PredictionRow]:
    """Read a submission or ground-truth CSV in `row_id,birds` form."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row_id", "birds"]:
            raise ValueError(f"{path}: expected header row_id,birds")
        rows = []
        for record in reader:
            if len(record) != 2:
                raise ValueError(f"{path}: malformed row {record!r}")
            rows.append(PredictionRow(record[0], frozenset(record[1].split())))
    return rows


def _sort_key(row_id: str) -> tuple[str, str, int]:
    return parse_row_id(row_id)
