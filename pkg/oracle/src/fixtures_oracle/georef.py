"""Great-circle distances via 3-D vector geometry (no haversine terms)."""

import math

EARTH_RADIUS_KM = 6371.0


def great_circle_km(lat_a: float, lon_a: float, lat_b: float, lon_b: float) -> float:
    """R * atan2(|u x v|, u . v) for the unit vectors of the two points.

    The atan2 form is exact at zero separation and at antipodes, where the
    cross product vanishes and the dot product pins the quadrant.
    """
    ua = _unit(lat_a, lon_a)
    ub = _unit(lat_b, lon_b)
    cross = (
        ua[1] * ub[2] - ua[2] * ub[1],
        ua[2] * ub[0] - ua[0] * ub[2],
        ua[0] * ub[1] - ua[1] * ub[0],
    )
    sin_angle = math.sqrt(cross[0] ** 2 + cross[1] ** 2 + cross[2] ** 2)
    cos_angle = ua[0] * ub[0] + ua[1] * ub[1] + ua[2] * ub[2]
    return EARTH_RADIUS_KM * math.atan2(sin_angle, cos_angle)


def _unit(lat: float, lon: float) -> tuple[float, float, float]:
    phi, lam = math.radians(lat), math.radians(lon)
    return (
        math.cos(phi) * math.cos(lam),
        math.cos(phi) * math.sin(lam),
        math.sin(phi),
    )
