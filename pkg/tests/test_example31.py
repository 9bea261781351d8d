import math

import numpy as np
import pytest

from bpchain.example31 import (BadParameter, LeafSegment, eval31, eval31_arr, eval31_inverse,
                               eval31_inverse_arr, example31_handle, leaf_geometry, leaf_param_arr,
                               leaf_parameter)
from bpchain.geometry import Point, reflect
from bpchain.maps import sampled_jacobian_det

T_SET = (0.25, 0.5, 1.0, 2.0, 4.0, 16.0)
SQ7 = math.sqrt(7.0)


def near(p, q, tol):
    (a, b), (c, d) = tuple(p), tuple(q)
    return math.hypot(a - c, b - d) < tol


def j1_points(t, n, rng):
    g = leaf_geometry(t)
    r = g.w1.r * np.exp(rng.uniform(0, 3, n))
    return np.column_stack([r, t / r])


def arc_points(t, n, rng, lo_point, hi_angle):
    g = leaf_geometry(t)
    a0 = math.atan2(lo_point.s, lo_point.r - g.center.r)
    a = rng.uniform(a0, hi_angle, n)
    return np.column_stack([g.center.r + g.radius * np.cos(a), g.radius * np.sin(a)])


def a1_a0_points(t, n, rng):
    g = leaf_geometry(t)
    top = 2 * math.pi - math.atan2(g.v1.s, g.v1.r - g.center.r)
    return arc_points(t, n, rng, g.w1, top)


def lower_points(t, n, rng):
    """Points on A2 and J2."""
    g = leaf_geometry(t)
    arc = arc_points(t, n // 2, rng, g.w1, math.atan2(g.v1.s, g.v1.r - g.center.r))
    return np.vstack([arc, j1_points(t, n - n // 2, rng)]) * [1, -1]


# leaf geometry ---------------------------------------------------------------

def test_leaf_geometry_t1():
    g = leaf_geometry(1.0)
    assert near(g.center, (0, 0), 1e-12) and g.radius == pytest.approx(math.sqrt(2), abs=1e-12)
    assert near(g.w1, (1, 1), 1e-12) and near(g.v1, (0.5, SQ7 / 2), 1e-12)


def test_leaf_geometry_t4():
    g = leaf_geometry(4.0)
    assert near(g.w1, (2, 2), 1e-12) and g.radius == pytest.approx(math.sqrt(8), abs=1e-12)
    assert near(g.v1, (1, SQ7), 1e-12)


def test_leaf_geometry_t_half():
    g = leaf_geometry(0.5)
    assert near(g.center, (1.96875, 0), 1e-12)
    assert g.radius == pytest.approx(0.25 * math.sqrt(1 + 0.5 ** 6), abs=1e-12)
    assert near(g.w1, (2, 0.25), 1e-12)
    assert abs(g.w1.dist(g.center) ** 2 - g.radius ** 2) < 1e-12


@pytest.mark.parametrize("t", [0.0, -1.0, float("nan"), float("inf")])
def test_leaf_geometry_rejects_bad_t(t):
    with pytest.raises(BadParameter):
        leaf_geometry(t)


@pytest.mark.parametrize("t", list(np.geomspace(1e-3, 1e4, 40)))
def test_leaf_geometry_invariants(t):
    g = leaf_geometry(t)
    scale = max(1.0, g.w1.r)
    assert abs(g.w1.r * g.w1.s - t) < 1e-9 * scale
    assert abs(g.w1.dist(g.center) - g.radius) < 1e-9 * scale
    assert g.v1.s > 0 and abs(g.v1.r - (g.w1.r - g.w1.s / 2)) < 1e-12 * scale
    assert g.w2 == reflect(g.w1) and g.v2 == reflect(g.v1)
    assert g.chord == pytest.approx(g.v1.dist(g.w1), rel=1e-12)


@pytest.mark.parametrize("t", T_SET)
def test_tangency_is_first_order(t):
    g = leaf_geometry(t)

    def gap(h):
        r = g.w1.r + h
        return abs(math.hypot(r - g.center.r, t / r) - g.radius)

    for h in (1e-2, 1e-3):
        hh = h * g.w1.r
        ratio = gap(hh / 10) / gap(hh)
        # second-order contact: shrinking h by 10 shrinks the gap by about 100
        assert 0.005 < ratio < 0.02


# leaf parameter ----------------------------------------------------------------

@pytest.mark.parametrize("z, t, seg", [((2, 0.5), 1.0, LeafSegment.J1),
                                       ((-math.sqrt(2), 0), 1.0, LeafSegment.A0),
                                       ((2, -0.5), 1.0, LeafSegment.J2)])
def test_leaf_parameter_examples(z, t, seg):
    got_t, got_seg = leaf_parameter(z)
    assert got_t == pytest.approx(t, abs=1e-9) and got_seg == seg


def test_leaf_parameter_puts_points_on_their_leaf(rng):
    z = rng.uniform(-50, 50, (10_000, 2))
    t, seg = leaf_param_arr(z)
    assert np.all(np.isfinite(t))
    for (r, s), tt, sg in zip(z[:500], t[:500], seg[:500]):
        g = leaf_geometry(tt)
        if sg in (LeafSegment.J1, LeafSegment.J2):
            d = abs(abs(s) - tt / r)
        else:
            d = abs(math.hypot(r - g.center.r, s) - g.radius)
        assert d < 1e-9 * max(1.0, abs(r), abs(s))


# map ---------------------------------------------------------------------------------

def test_eval31_examples():
    assert near(eval31((2, 0.5)), (1.75, 4 / 7), 1e-12)
    assert near(eval31((1, 1)), (0.5, SQ7 / 2), 1e-9)
    assert near(eval31((0.5, -SQ7 / 2)), (1, -1), 1e-9)


def test_eval31_inverse_examples():
    assert near(eval31_inverse((1.75, 4 / 7)), (2, 0.5), 1e-12)
    assert near(eval31_inverse((0.5, SQ7 / 2)), (1, 1), 1e-9)
    z = (-3, 0.2)
    assert near(eval31_inverse(eval31(z)), z, 1e-9)


def test_point_inputs_round_trip():
    out = eval31(Point(2, 0.5))
    assert isinstance(out, Point)
    assert eval31_inverse(out).dist(Point(2, 0.5)) < 1e-12


@pytest.mark.parametrize("t", T_SET)
def test_endpoint_identities(t):
    g = leaf_geometry(t)
    scale = max(1.0, g.w1.r)
    assert near(eval31(g.w1), g.v1, 1e-9 * scale)
    assert near(eval31(g.v2), g.w2, 1e-9 * scale)


def test_handle():
    h = example31_handle()
    assert h.label == "example31" and h.domain_contains((0, -5))
    assert near(h.eval((2, 0.5)), (1.75, 4 / 7), 1e-12)


def test_leaf_invariance(rng):
    z = rng.uniform(-50, 50, (10_000, 2))
    t0, _ = leaf_param_arr(z)
    t1, _ = leaf_param_arr(eval31_arr(z))
    assert np.max(np.abs(t1 - t0)) < 1e-7


def test_round_trip_random(rng):
    z = rng.uniform(-50, 50, (10_000, 2))
    back = eval31_inverse_arr(eval31_arr(z))
    assert np.max(np.hypot(*(back - z).T)) < 1e-9


def test_branch_step_on_upper_branch(rng):
    for t in T_SET:
        z = j1_points(t, 1000 // len(T_SET), rng)
        fz = eval31_arr(z)
        assert np.max(np.abs((z[:, 0] - fz[:, 0]) - z[:, 1] / 2)) < 1e-9
        assert np.all(fz[:, 1] > 0)


def test_constant_chord_on_arcs(rng):
    for t in T_SET:
        z = a1_a0_points(t, 1000 // len(T_SET), rng)
        step = np.hypot(*(eval31_arr(z) - z).T)
        assert np.max(np.abs(step - leaf_geometry(t).chord)) < 1e-7


def test_reflection_equivariance(rng):
    for t in T_SET:
        z = lower_points(t, 1000 // len(T_SET), rng)
        lhs = eval31_arr(z)
        rhs = eval31_inverse_arr(z * [1, -1]) * [1, -1]
        assert np.max(np.hypot(*(lhs - rhs).T)) < 1e-8


def test_junction_continuity():
    for t in T_SET:
        g = leaf_geometry(t)
        for p in (g.w1, g.v1, g.v2, g.w2):
            base = np.array(eval31(p))
            for d in ((1e-9, 0), (-1e-9, 0), (0, 1e-9), (0, -1e-9)):
                q = (p.r + d[0], p.s + d[1])
                assert np.hypot(*(np.array(eval31(q)) - base)) < 1e-6 * max(1.0, g.w1.r)


def _junction_distance(z):
    t, _ = leaf_param_arr(z)
    out = np.full(len(z), np.inf)
    for i, (p, tt) in enumerate(zip(z, t)):
        g = leaf_geometry(tt)
        out[i] = min(math.hypot(p[0] - q.r, p[1] - q.s) for q in (g.w1, g.v1, g.v2, g.w2))
    return out


def test_orientation_preserving(rng):
    z = rng.uniform(-20, 20, (10_000, 2))
    z = z[_junction_distance(z) > 1e-4]
    det = sampled_jacobian_det(example31_handle(), z, 1e-6)
    assert np.all(det > 0)
