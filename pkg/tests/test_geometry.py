import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bpchain.geometry import (TOL_ON, BoxR, ChordTooLong, CircleSpec, NotOnCircle, Point, box_dilate,
                              chord_rotate, reflect)

coord = st.floats(-1e3, 1e3, allow_nan=False)


def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point(float("nan"), 0.0)
    with pytest.raises(ValueError):
        Point(0.0, float("inf"))


def test_box_rejects_misordered_corners():
    with pytest.raises(ValueError):
        BoxR.from_bounds(1, 0, 0, 1)


@pytest.mark.parametrize("z, img", [((3, 2), (3, -2)), ((5, 0), (5, 0))])
def test_reflect_examples(z, img):
    assert tuple(reflect(Point(*z))) == img


def test_reflect_involution_example():
    z = Point(-1.5, 7.25)
    assert reflect(reflect(z)) == z


@given(coord, coord, coord, coord)
def test_reflect_is_isometric(a, b, c, d):
    p, q = Point(a, b), Point(c, d)
    assert abs(reflect(p).dist(reflect(q)) - p.dist(q)) <= 1e-12 * max(1.0, p.dist(q))


def test_chord_rotate_quarter_turn():
    out = chord_rotate(CircleSpec(Point(0, 0), 1.0), Point(1, 0), math.sqrt(2), "ccw")
    assert out.dist(Point(0, 1)) < 1e-12


def test_chord_rotate_derived_case():
    out = chord_rotate(CircleSpec(Point(0, 0), 1.0), Point(0, 1), math.sqrt(2) / 2, "ccw")
    # cos(theta) = 1 - chord^2 / 2 = 0.75; moving ccw from the top goes left
    assert out.dist(Point(-math.sqrt(1 - 0.75 ** 2), 0.75)) < 1e-12
    assert abs(out.dist(Point(0, 1)) - math.sqrt(2) / 2) < 1e-12


def test_chord_rotate_zero_chord_is_identity():
    z = Point(0.6, 0.8)
    assert chord_rotate(CircleSpec(Point(0, 0), 1.0), z, 0.0, "cw") == z


def test_chord_rotate_errors():
    c = CircleSpec(Point(0, 0), 1.0)
    with pytest.raises(NotOnCircle):
        chord_rotate(c, Point(1.1, 0), 0.5, "ccw")
    with pytest.raises(ChordTooLong):
        chord_rotate(c, Point(1, 0), 2.5, "ccw")


def test_chord_rotate_properties(rng):
    for _ in range(10_000 // 20):
        c = CircleSpec(Point(*rng.uniform(-100, 100, 2)), float(rng.uniform(0.01, 100)))
        a = rng.uniform(0, 2 * np.pi)
        z = Point(c.center.r + c.radius * math.cos(a), c.center.s + c.radius * math.sin(a))
        chord = float(rng.uniform(0, 2 * c.radius))
        direction = "ccw" if rng.random() < 0.5 else "cw"
        out = chord_rotate(c, z, chord, direction)
        assert abs(out.dist(c.center) - c.radius) <= TOL_ON
        assert abs(out.dist(z) - chord) <= TOL_ON * max(1.0, c.radius)
        # signed angle has the requested sign
        cross = (z.r - c.center.r) * (out.s - c.center.s) - (z.s - c.center.s) * (out.r - c.center.r)
        if chord > 1e-6 * c.radius and chord < 2 * c.radius * (1 - 1e-6):
            assert (cross > 0) == (direction == "ccw")
        back = chord_rotate(c, out, chord, "cw" if direction == "ccw" else "ccw")
        assert back.dist(z) < 1e-9 * max(1.0, c.radius)


def test_box_dilate_examples():
    b = BoxR.from_bounds(0, 0, 1, 1)
    assert box_dilate(b, 0.0) == b
    assert box_dilate(b, 0.5).bounds == (-0.5, -0.5, 1.5, 1.5)
    c = BoxR.from_bounds(2, 3, 4, 5)
    assert box_dilate(c, 1.0).intersection(c) == c


def test_box_queries():
    b = BoxR.from_bounds(0, 0, 2, 1)
    assert b.contains((1, 0.5)) and not b.contains((3, 0))
    assert b.distance_to((3, 0.5)) == pytest.approx(1.0)
    assert b.intersection(BoxR.from_bounds(5, 5, 6, 6)) is None
    assert BoxR.from_bounds(1, 1, 1, 2).is_degenerate()
