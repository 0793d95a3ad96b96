import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpsfeed.geo import (
    EARTH_RADIUS_M,
    GeoPoint,
    circle_ring,
    consecutive_distances,
    destination_point,
    haversine_array,
    haversine_m,
    nearest_in_window,
    within_buffer,
)
from gpsfeed.errors import ValidationError

# R * dlon for a 0.001 degree step along the equator
EQUATOR_MILLIDEGREE_M = 6_371_000.0 * math.radians(0.001)

lats = st.floats(-89.9, 89.9)
lons = st.floats(-179.9, 179.9)
points = st.builds(GeoPoint, lats, lons)


def unit_vector_distance(a, b):
    """Independent great-circle distance via the angle between unit vectors."""
    def vec(p):
        la, lo = math.radians(p[0]), math.radians(p[1])
        return (math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la))

    u, v = vec(a), vec(b)
    cross = (
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    )
    dot = sum(x * y for x, y in zip(u, v))
    return EARTH_RADIUS_M * math.atan2(math.sqrt(sum(c * c for c in cross)), dot)


def test_identical_points_are_zero():
    p = GeoPoint(7.29, 80.63)
    assert haversine_m(p, p) == 0.0


def test_equator_millidegree():
    d = haversine_m(GeoPoint(0.0, 0.0), GeoPoint(0.0, 0.001))
    assert d == pytest.approx(111.195, abs=0.01)
    assert d == pytest.approx(EQUATOR_MILLIDEGREE_M, rel=1e-12)


@given(points, points)
def test_symmetric_and_nonnegative(a, b):
    assert haversine_m(a, b) == haversine_m(b, a)
    assert haversine_m(a, b) >= 0.0


@given(points, points)
def test_matches_unit_vector_oracle(a, b):
    assert haversine_m(a, b) == pytest.approx(unit_vector_distance(a, b), rel=1e-9, abs=1e-6)


def test_within_buffer_boundary_cases():
    center = GeoPoint(0.0, 0.0)
    east = GeoPoint(0.0, 0.001)  # 111.195 m away
    assert within_buffer(center, center, 1.0)
    assert not within_buffer(east, center, 100.0)
    assert within_buffer(east, center, 111.2)


def test_within_buffer_is_inclusive():
    center = GeoPoint(0.0, 0.0)
    east = GeoPoint(0.0, 0.001)
    assert within_buffer(east, center, haversine_m(east, center))


def test_within_buffer_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        within_buffer(GeoPoint(0, 0), GeoPoint(0, 0), 0.0)


def test_nearest_in_window_empty():
    assert nearest_in_window([], GeoPoint(0, 0), 50.0) is None


def test_nearest_in_window_picks_closest_qualifying():
    center = GeoPoint(0.0, 0.0)
    # meridian offsets: R * dphi
    p60 = GeoPoint(math.degrees(60.0 / EARTH_RADIUS_M), 0.0)
    p30 = GeoPoint(math.degrees(30.0 / EARTH_RADIUS_M), 0.0)
    idx, dist = nearest_in_window([p60, p30], center, 50.0)
    assert idx == 1
    assert dist == pytest.approx(30.0, abs=1e-6)


def test_nearest_in_window_tie_goes_to_lower_index():
    center = GeoPoint(0.0, 0.0)
    north = GeoPoint(math.degrees(30.0 / EARTH_RADIUS_M), 0.0)
    south = GeoPoint(-math.degrees(30.0 / EARTH_RADIUS_M), 0.0)
    assert nearest_in_window([north, south], center, 50.0)[0] == 0


def test_nearest_in_window_none_inside():
    far = GeoPoint(0.0, 0.01)
    assert nearest_in_window([far], GeoPoint(0.0, 0.0), 50.0) is None


def test_array_version_agrees_with_scalar():
    rng = np.random.default_rng(0)
    la = rng.uniform(-60, 60, 500)
    lo = rng.uniform(-170, 170, 500)
    center = (10.0, 20.0)
    arr = haversine_array(la, lo, center)
    scalar = [haversine_m((a, b), center) for a, b in zip(la, lo)]
    np.testing.assert_allclose(arr, scalar, rtol=1e-12)
    legs = consecutive_distances(la, lo)
    np.testing.assert_allclose(
        legs, [haversine_m((la[i], lo[i]), (la[i + 1], lo[i + 1])) for i in range(499)], rtol=1e-12
    )


@given(points, st.floats(0.0, 360.0), st.floats(1.0, 5000.0))
def test_destination_point_distance(origin, bearing, distance):
    assert haversine_m(origin, destination_point(origin, bearing, distance)) == pytest.approx(
        distance, rel=1e-9, abs=1e-6
    )


def test_circle_ring_is_closed():
    ring = circle_ring((7.0, 80.0), 50.0, 64)
    assert len(ring) == 65
    assert ring[0] == ring[-1]


def test_checked_point_validates():
    with pytest.raises(ValidationError):
        GeoPoint.checked(91.0, 0.0)
