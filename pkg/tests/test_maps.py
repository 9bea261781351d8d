import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bpchain.geometry import BoxR, Point
from bpchain.maps import (DomainError, MapHandle, compose, conjugate, identity, inverse, iterate_map,
                          rotation, sampled_jacobian_det, scaling, translation)
from bpchain.example31 import example31_handle
from bpchain.example34 import example34_handle


def close(p, q, tol=1e-12):
    return math.hypot(p[0] - q[0], p[1] - q[1]) < tol


def test_translation_examples():
    assert close(translation(1, 0).eval((0, 0)), (1, 0))
    assert close(translation(0, 0).eval((7, -3)), (7, -3))
    assert close(translation(2, 5).eval_inverse((2, 5)), (0, 0))
    assert translation(2, 5).expansion_bound(BoxR.from_bounds(0, 0, 1, 1)) == 1.0


def test_rotation_examples():
    assert close(rotation(0, 0, math.pi).eval((1, 0)), (-1, 0))
    assert close(rotation(0, 0, math.pi / 2).eval((1, 0)), (0, 1))
    f = rotation(3, 4, 2 * math.pi / 5)
    assert close(f.iterate((4, 4), 5), (4, 4), 1e-12)


def test_compose_examples():
    assert close(compose(translation(1, 0), translation(-1, 0)).eval((0.5, 0.5)), (0.5, 0.5))
    q = rotation(0, 0, math.pi / 2)
    assert close(compose(q, q).eval((1, 0)), (-1, 0))
    assert close(compose(translation(0, 1), rotation(0, 0, math.pi)).eval((1, 0)), (-1, 1))


def test_conjugate_examples():
    g = conjugate(rotation(0, 0, math.pi), translation(1, 0))
    assert close(g.eval((1, 0)), (1, 0))
    a = translation(3, 0)
    assert close(conjugate(a, identity()).eval((2, 2)), tuple(a.eval((2, 2))))
    assert close(conjugate(translation(1, 0), rotation(0, 0, math.pi / 2)).eval((0, 0)), (0, 1))


def test_scalar_eval_raises_domain_error():
    with pytest.raises(DomainError):
        example34_handle().eval((3, 0))


def test_array_eval_marks_off_domain_rows():
    out = example34_handle().forward_arr(np.array([[0.0, 1.0], [3.0, 0.0]]))
    assert np.all(np.isfinite(out[0])) and np.all(np.isnan(out[1]))


def _bundled():
    return [translation(1.5, -2), rotation(1, 2, 0.7), scaling(0.5, -1, 0.8),
            compose(rotation(0, 0, 1.0), translation(0.3, 0.1)),
            conjugate(rotation(0, 0, 2.0), translation(-1, 3)), inverse(rotation(2, 2, 0.4)),
            iterate_map(rotation(0, 0, 0.3), 4), example31_handle(), example34_handle()]


@pytest.mark.parametrize("f", _bundled(), ids=lambda f: f.label)
def test_round_trip_and_orientation(f, rng):
    z = rng.uniform(-20, 20, (10_000, 2))
    z = z[f.domain_contains(z)]
    fz = f.forward_arr(z)
    assert np.all(f.domain_contains(fz))
    scale = np.maximum(1.0, np.abs(z).max(axis=1))
    assert np.max(np.hypot(*(f.backward_arr(fz) - z).T) / scale) < 1e-9
    # finite differences straddling a seam of the piecewise examples can be
    # meaningless, so those maps are checked away from the axis here and in
    # their own suites near it
    w = z[np.abs(z[:, 1]) > 1e-3]
    det = sampled_jacobian_det(f, w, 1e-5)
    assert np.nanmin(det) > 0


@pytest.mark.parametrize("f", _bundled()[:7], ids=lambda f: f.label)
def test_expansion_bound_dominates_difference_quotients(f, rng):
    lo = rng.uniform(-10, 10, (1000, 2))
    side = rng.uniform(0.01, 2, (1000, 1))
    boxes = np.concatenate([lo, lo + side], axis=1)
    L = f.expansion_bounds(boxes)
    for b, bound in zip(boxes[:50], L[:50]):
        a = rng.uniform(b[:2], b[2:], (100, 2))
        c = rng.uniform(b[:2], b[2:], (100, 2))
        q = np.hypot(*(f.forward_arr(a) - f.forward_arr(c)).T) / np.hypot(*(a - c).T)
        assert q.max() <= bound * (1 + 1e-9)


@pytest.mark.parametrize("f", [example31_handle(), example34_handle()], ids=lambda f: f.label)
def test_sampled_expansion_bound_statistically(f, rng):
    r = rng.uniform(-5, 5, (300, 1))
    s = rng.uniform(0.05, 5, (300, 1)) * rng.choice([-1, 1], (300, 1))
    boxes = np.concatenate([r, s, r + 0.05, s + 0.05], axis=1)
    L = f.expansion_bounds(boxes)
    worst = 0.0
    for b, bound in zip(boxes, L):
        a = rng.uniform(b[:2], b[2:], (100, 2))
        c = rng.uniform(b[:2], b[2:], (100, 2))
        q = np.hypot(*(f.forward_arr(a) - f.forward_arr(c)).T) / np.hypot(*(a - c).T)
        worst = max(worst, float(np.nanmax(q) / bound))
    assert worst <= 1.0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi), st.floats(-5, 5), st.floats(-5, 5))
def test_compose_inverse_identity(cx, cy, th, x, y):
    f = rotation(cx, cy, th)
    g = compose(inverse(f), f)
    out = g.eval((x, y))
    assert math.hypot(out[0] - x, out[1] - y) < 1e-9


def test_spec_tree_follows_constructors():
    f = conjugate(rotation(0, 0, 1.0), translation(1, 2))
    assert f.spec.pretty() == "conj(rot:0.0,0.0,1.0;trans:1.0,2.0)"
    assert f.spec.build().label == f.label
