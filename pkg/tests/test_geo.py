import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbannav.geo import (
    EARTH_RADIUS_M,
    CoordinateError,
    LatLon,
    bearing_deg,
    geodesic_m,
    norm_deg,
    offset,
    signed_delta_deg,
)

coords = st.builds(
    LatLon,
    lat=st.floats(min_value=-89.0, max_value=89.0, allow_nan=False),
    lon=st.floats(min_value=-180.0, max_value=180.0, allow_nan=False),
)


class TestLatLon:
    def test_rejects_out_of_range_latitude(self):
        with pytest.raises(CoordinateError):
            LatLon(91.0, 0.0)

    def test_rejects_out_of_range_longitude(self):
        with pytest.raises(CoordinateError):
            LatLon(0.0, 181.0)

    def test_rejects_nan(self):
        with pytest.raises(CoordinateError):
            LatLon(float("nan"), 0.0)

    def test_rejects_poles(self):
        with pytest.raises(CoordinateError):
            LatLon(90.0, 0.0)


class TestGeodesic:
    def test_zero_for_identical_points(self):
        p = LatLon(40.0, -74.0)
        assert geodesic_m(p, p) == 0.0

    def test_symmetry(self):
        a, b = LatLon(40.0, -74.0), LatLon(40.001, -74.002)
        assert geodesic_m(a, b) == pytest.approx(geodesic_m(b, a))

    def test_one_degree_latitude_arc(self):
        # One degree of latitude is one 360th of a great circle.
        a, b = LatLon(0.0, 0.0), LatLon(1.0, 0.0)
        expected = 2.0 * math.pi * EARTH_RADIUS_M / 360.0
        assert geodesic_m(a, b) == pytest.approx(expected, rel=1e-9)

    def test_equator_longitude_arc(self):
        a, b = LatLon(0.0, 10.0), LatLon(0.0, 11.0)
        expected = 2.0 * math.pi * EARTH_RADIUS_M / 360.0
        assert geodesic_m(a, b) == pytest.approx(expected, rel=1e-9)

    @settings(max_examples=200)
    @given(coords, coords, coords)
    def test_triangle_inequality(self, a, b, c):
        assert geodesic_m(a, c) <= geodesic_m(a, b) + geodesic_m(b, c) + 1e-6

    @settings(max_examples=200)
    @given(coords, coords)
    def test_non_negative_and_symmetric(self, a, b):
        d = geodesic_m(a, b)
        assert d >= 0.0
        assert d == pytest.approx(geodesic_m(b, a), abs=1e-9)


class TestBearing:
    def test_due_north(self):
        assert bearing_deg(LatLon(40.0, -74.0), LatLon(40.01, -74.0)) == pytest.approx(0.0)

    def test_due_east(self):
        assert bearing_deg(LatLon(0.0, 0.0), LatLon(0.0, 0.01)) == pytest.approx(90.0)

    def test_due_south(self):
        assert bearing_deg(LatLon(40.0, -74.0), LatLon(39.99, -74.0)) == pytest.approx(180.0)

    def test_due_west(self):
        assert bearing_deg(LatLon(0.0, 0.0), LatLon(0.0, -0.01)) == pytest.approx(270.0)


class TestOffset:
    def test_round_trip_distance(self):
        origin = LatLon(40.0, -74.0)
        moved = offset(origin, 30.0, 40.0)
        assert geodesic_m(origin, moved) == pytest.approx(50.0, rel=1e-4)

    def test_north_only_keeps_longitude(self):
        origin = LatLon(40.0, -74.0)
        moved = offset(origin, 100.0, 0.0)
        assert moved.lon == origin.lon
        assert moved.lat > origin.lat


class TestAngles:
    def test_norm_deg(self):
        assert norm_deg(-90.0) == 270.0
        assert norm_deg(720.0) == 0.0

    def test_signed_delta_wraps(self):
        assert signed_delta_deg(350.0, 10.0) == pytest.approx(20.0)
        assert signed_delta_deg(10.0, 350.0) == pytest.approx(-20.0)
        assert signed_delta_deg(0.0, 180.0) == pytest.approx(180.0)

    @settings(max_examples=200)
    @given(
        st.floats(min_value=0.0, max_value=360.0, allow_nan=False),
        st.floats(min_value=0.0, max_value=360.0, allow_nan=False),
    )
    def test_signed_delta_range(self, a, b):
        d = signed_delta_deg(a, b)
        assert -180.0 < d <= 180.0
        gap = abs((a + d - b) % 360.0)
        assert min(gap, 360.0 - gap) < 1e-6
