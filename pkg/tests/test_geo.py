"""Haversine distances and occurrence tables."""

import math

import numpy as np
import pytest

from birdsed.geo import (
    EARTH_RADIUS_KM,
    GeoPoint,
    OccurrenceTable,
    Site,
    UnknownSpeciesError,
    haversine_km,
    load_occurrences,
    load_sites,
    min_haversine_distance,
)


def test_identical_points_are_zero():
    p = GeoPoint(36.12, -86.67)
    assert haversine_km(p, p) == 0.0


def test_antipodal_arc():
    d = haversine_km(GeoPoint(0.0, 0.0), GeoPoint(0.0, 180.0))
    assert d == pytest.approx(math.pi * 6371.0, abs=1e-9)
    assert d == pytest.approx(20015.086796020572, abs=1e-6)


def test_nashville_to_los_angeles():
    # classic haversine reference pair
    d = haversine_km(GeoPoint(36.12, -86.67), GeoPoint(33.94, -118.40))
    assert d == pytest.approx(2886.4, abs=0.5)


def test_symmetry_and_bounds():
    rng = np.random.default_rng(17)
    for _ in range(200):
        a = GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)))
        b = GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)))
        d_ab = haversine_km(a, b)
        assert d_ab == pytest.approx(haversine_km(b, a), abs=1e-12)
        assert 0.0 <= d_ab <= math.pi * EARTH_RADIUS_KM + 1e-9


def test_triangle_inequality():
    rng = np.random.default_rng(29)
    for _ in range(200):
        pts = [
            GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)))
            for _ in range(3)
        ]
        ab = haversine_km(pts[0], pts[1])
        bc = haversine_km(pts[1], pts[2])
        ac = haversine_km(pts[0], pts[2])
        assert ac <= ab + bc + 1e-6


def test_one_degree_of_latitude():
    # a meridian degree is R * pi/180
    d = haversine_km(GeoPoint(10.0, 25.0), GeoPoint(11.0, 25.0))
    assert d == pytest.approx(EARTH_RADIUS_KM * math.pi / 180.0, abs=1e-9)


def test_point_validation():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, -200.0)


def test_site_validation():
    loc = GeoPoint(42.47, -76.45)
    assert Site("COR", loc).site_id == "COR"
    with pytest.raises(ValueError):
        Site("XYZ", loc)


def test_min_distance_basics():
    site = Site("SSW", GeoPoint(42.47, -76.45))
    occ = OccurrenceTable()
    occ.add("amecro", GeoPoint(42.47, -76.45))
    assert min_haversine_distance("amecro", site, occ) == 0.0

    with pytest.raises(UnknownSpeciesError):
        min_haversine_distance("missing", site, occ)


def test_min_distance_takes_minimum_and_is_order_invariant():
    site = Site("COL", GeoPoint(5.57, -75.85))
    near = GeoPoint(5.60, -75.85)
    mid = GeoPoint(10.0, -75.85)
    far = GeoPoint(45.0, -75.85)

    fwd = OccurrenceTable()
    rev = OccurrenceTable()
    for p in (near, mid, far):
        fwd.add("sp", p)
    for p in (far, mid, near):
        rev.add("sp", p)

    d_fwd = min_haversine_distance("sp", site, fwd)
    assert d_fwd == min_haversine_distance("sp", site, rev)
    assert d_fwd == pytest.approx(haversine_km(near, site.location))


def test_adding_occurrence_never_increases_min():
    site = Site("SNE", GeoPoint(38.49, -119.95))
    occ = OccurrenceTable()
    occ.add("sp", GeoPoint(0.0, 0.0))
    rng = np.random.default_rng(31)
    prev = min_haversine_distance("sp", site, occ)
    for _ in range(50):
        occ.add("sp", GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180))))
        cur = min_haversine_distance("sp", site, occ)
        assert cur <= prev + 1e-12
        prev = cur


def test_load_occurrences_skips_blank_coordinates(tmp_path):
    p = tmp_path / "occ.csv"
    p.write_text(
        "species,latitude,longitude\n"
        "amecro,42.5,-76.4\n"
        "amecro,,\n"
        "norcar,10.25,-84.5\n"
        "norcar,10.30,\n"
    )
    occ = load_occurrences(p)
    assert occ.counts() == {"amecro": 1, "norcar": 1}
    assert "amecro" in occ and "missing" not in occ


def test_load_occurrences_missing_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("species,lat,lon\namecro,1,2\n")
    with pytest.raises(ValueError):
        load_occurrences(p)


def test_load_sites(tmp_path):
    p = tmp_path / "sites.csv"
    p.write_text(
        "site_id,latitude,longitude\n"
        "COL,5.57,-75.85\n"
        "COR,10.12,-84.51\n"
        "SNE,38.49,-119.95\n"
        "SSW,42.47,-76.45\n"
    )
    sites = load_sites(p)
    assert set(sites) == {"COL", "COR", "SNE", "SSW"}
    assert sites["SSW"].location.latitude_deg == 42.47
