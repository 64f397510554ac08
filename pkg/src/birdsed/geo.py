"""Haversine geometry and per-species occurrence tables.

Distances are great-circle kilometers on a sphere of radius 6371.0 km.
Calibration and postprocessing both key off the minimum distance between a
recording site and any training occurrence of a species.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

EARTH_RADIUS_KM = 6371.0

SITE_IDS = frozenset({"COL", "COR", "SNE", "SSW"})


class UnknownSpeciesError(KeyError):
    """Species not present in the occurrence table."""


@dataclass(frozen=True)
class GeoPoint:
    latitude_deg: float
    longitude_deg: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.latitude_deg <= 90.0):
            raise ValueError(f"latitude {self.latitude_deg} outside [-90, 90]")
        if not (-180.0 <= self.longitude_deg <= 180.0):
            raise ValueError(f"longitude {self.longitude_deg} outside [-180, 180]")


@dataclass(frozen=True)
class Site:
    """One of the four fixed soundscape recording locations."""

    site_id: str
    location: GeoPoint

    def __post_init__(self) -> None:
        if self.site_id not in SITE_IDS:
            raise ValueError(f"site_id must be one of {sorted(SITE_IDS)}, got {self.site_id!r}")


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km: 2R*asin(sqrt(hav(dphi) + cos*cos*hav(dlam)))."""
    phi_a = math.radians(a.latitude_deg)
    phi_b = math.radians(b.latitude_deg)
    dphi = phi_b - phi_a
    dlam = math.radians(b.longitude_deg - a.longitude_deg)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi_a) * math.cos(phi_b) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


@dataclass
class OccurrenceTable:
    """Training-recording locations grouped by species label."""

    points: dict[str, list[GeoPoint]] = field(default_factory=dict)

    def add(self, species: str, point: GeoPoint) -> None:
        self.points.setdefault(species, []).append(point)

    def species(self) -> set[str]:
        return set(self.points)

    def __contains__(self, species: str) -> bool:
        return species in self.points

    def counts(self) -> dict[str, int]:
        return {s: len(p) for s, p in self.points.items()}


def min_haversine_distance(species: str, site: Site, occ: OccurrenceTable) -> float:
    """Minimum distance from the site to any occurrence of the species."""
    pts = occ.points.get(species)
    if not pts:
        raise UnknownSpeciesError(species)
    return min(haversine_km(p, site.location) for p in pts)


def load_occurrences(path: str | Path) -> OccurrenceTable:
    """Read an occurrence CSV (species,latitude,longitude).

    Rows with missing or blank coordinates are skipped: a recording without
    metadata must not contribute a spurious zero distance.
    """
    table = OccurrenceTable()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, path, ("species", "latitude", "longitude"))
        for row in reader:
            lat, lon = row["latitude"].strip(), row["longitude"].strip()
            if not lat or not lon:
                continue
            table.add(row["species"].strip(), GeoPoint(float(lat), float(lon)))
    return table


def load_sites(path: str | Path) -> dict[str, Site]:
    """Read the sites CSV (site_id,latitude,longitude) into an id -> Site map."""
    sites: dict[str, Site] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, path, ("site_id", "latitude", "longitude"))
        for row in reader:
            sid = row["site_id"].strip()
            sites[sid] = Site(sid, GeoPoint(float(row["latitude"]), float(row["longitude"])))
    return sites


def _require_columns(reader: csv.DictReader, path: str | Path, needed: Iterable[str]) -> None:
    have = set(reader.fieldnames or ())
    missing = [c for c in needed if c not in have]
    if missing:
        raise ValueError(f"{Path(path).name}: missing columns {missing}")
