"""The leaf-preserving homeomorphism of the plane built from hyperbola
branches joined by circular arcs.

Every point lies on exactly one leaf ``L_t`` (``t > 0``):

* ``J1``: the branch ``r*s = t`` with ``r >= p(w1)``, ``s > 0``;
* ``A``: an arc of the circle ``C_t`` with ``r <= p(w1)``, split into
  ``A1 = [v1, w1]``, ``A0 = [v1, v2]`` and ``A2 = [v2, w2]``;
* ``J2``: the mirror image of ``J1``.

For ``t >= 1`` the circle is centred at the origin with radius ``sqrt(2t)``;
for ``t <= 1`` its centre is ``((1 - t**6)/t, 0)`` and its radius
``t**2 * sqrt(1 + t**6)``.  Points travel in along ``J1`` (the abscissa drops
by half the ordinate each step), rotate counter-clockwise round the arc by a
fixed chord, and leave along ``J2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import Point, chord_angle, reflect_arr, rotate_about_arr
from .maps import MapHandle, Example31

T_MIN = 1e-6
T_MAX = 1e8
TOL_LEAF = 1e-9
_BISECT_STEPS = 64


class BadParameter(ValueError):
    pass


class NotCovered(ValueError):
    """No leaf parameter inside ``[T_MIN, T_MAX]`` brackets the point."""


class LeafSegment(IntEnum):
    J1 = 0
    A1 = 1
    A0 = 2
    A2 = 3
    J2 = 4


@dataclass(frozen=True)
class LeafGeometry:
    t: float
    center: Point
    radius: float
    w1: Point
    w2: Point
    v1: Point
    v2: Point
    chord: float


def _geom(t: np.ndarray):
    """Vectorised leaf data.

    Returns ``(cr, R, wr, ws, dwr, dvr, vs, chord)``: centre abscissa, radius,
    ``w1``, the abscissa offsets of ``w1`` and ``v1`` from the centre (computed
    without cancellation), ``q(v1)`` and the arc chord ``|v1 - w1|``.
    """
    t = np.asarray(t, dtype=float)
    big = t >= 1.0
    st = np.sqrt(t)
    t2 = t * t
    t5 = t2 * t2 * t
    t6 = t5 * t
    cr = np.where(big, 0.0, (1.0 - t6) / t)
    R = np.where(big, np.sqrt(2.0 * t), t2 * np.sqrt(1.0 + t6))
    wr = np.where(big, st, 1.0 / t)
    ws = np.where(big, st, t2)
    dwr = np.where(big, st, t5)
    dvr = dwr - 0.5 * ws
    vs = np.sqrt(np.maximum(R * R - dvr * dvr, 0.0))
    chord = np.hypot(0.5 * ws, vs - ws)
    return cr, R, wr, ws, dwr, dvr, vs, chord


def leaf_geometry(t: float) -> LeafGeometry:
    if not (math.isfinite(t) and t > 0):
        raise BadParameter(f"leaf parameter must be positive and finite, got {t}")
    cr, R, wr, ws, dwr, dvr, vs, chord = (float(x) for x in _geom(np.array(t)))
    vr = wr - 0.5 * ws
    return LeafGeometry(
        t=float(t), center=Point(cr, 0.0), radius=R,
        w1=Point(wr, ws), w2=Point(wr, -ws),
        v1=Point(vr, vs), v2=Point(vr, -vs), chord=chord,
    )


def inside_leaf(r, s, t) -> np.ndarray:
    """True where the upper-half point ``(r, |s|)`` lies strictly inside the
    region bounded by the upper half of ``L_t`` and the axis.

    The region grows with ``t``; the leaf parameter of a point is the
    threshold where this flips.
    """
    r = np.asarray(r, dtype=float)
    s = np.abs(np.asarray(s, dtype=float))
    t = np.asarray(t, dtype=float)
    cr, R, wr, ws, dwr, _, _, _ = _geom(t)
    on_branch = r >= wr
    big = t >= 1.0
    # circle test written without cancellation for the small circles
    u = np.where(big, r, r - np.where(big, 0.0, 1.0 / t))
    tt = np.where(big, 1.0, t)
    t4 = tt ** 4
    small_f = u * u + 2.0 * u * tt * t4 + s * s - t4
    big_f = r * r + s * s - 2.0 * t
    circ = np.where(big, big_f, small_f) < 0.0
    return np.where(on_branch, r * s < t, circ)


def _bisect_t(r: np.ndarray, s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    lo_arr = np.full(r.shape, math.log(lo))
    hi_arr = np.full(r.shape, math.log(hi))
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo_arr + hi_arr)
        ins = inside_leaf(r, s, np.exp(mid))
        hi_arr = np.where(ins, mid, hi_arr)
        lo_arr = np.where(ins, lo_arr, mid)
    return np.exp(0.5 * (lo_arr + hi_arr))


def leaf_param_arr(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leaf parameter and segment code for each row of ``z``.

    Closed forms cover the hyperbola branches and the large circles; the
    small-circle arcs (``t < 1``) are found by bisection in ``log t``.
    Uncovered points get ``t = NaN`` and segment ``-1``.
    """
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    r = z[:, 0]
    s = np.abs(z[:, 1])
    lower = z[:, 1] < 0
    n = len(z)
    t = np.full(n, np.nan)
    branch = np.zeros(n, dtype=bool)

    th = r * s
    with np.errstate(divide="ignore", invalid="ignore"):
        hyp = (s > 0) & (r > 0) & (((th >= 1.0) & (r >= s)) | ((th < 1.0) & (r * th >= 1.0)))
    t[hyp] = th[hyp]
    branch[hyp] = True

    tc = 0.5 * (r * r + s * s)
    circ = ~hyp & (tc >= 1.0) & (r <= np.sqrt(tc))
    t[circ] = tc[circ]

    rest = ~hyp & ~circ & np.isfinite(r) & np.isfinite(s)
    if np.any(rest):
        rr, ss = r[rest], s[rest]
        ok = ~inside_leaf(rr, ss, T_MIN) & inside_leaf(rr, ss, 1.0)
        tb = np.full(rr.shape, np.nan)
        if np.any(ok):
            tb[ok] = _bisect_t(rr[ok], ss[ok], T_MIN, 1.0)
        t[rest] = tb
        # the bracket above is exhaustive for the plane; anything left over
        # is either huge or an arc point the closed forms rejected by rounding
        miss = rest.copy()
        miss[rest] = ~ok
        if np.any(miss):
            rr, ss = r[miss], s[miss]
            ok2 = ~inside_leaf(rr, ss, T_MIN) & inside_leaf(rr, ss, T_MAX)
            tb = np.full(rr.shape, np.nan)
            if np.any(ok2):
                tb[ok2] = _bisect_t(rr[ok2], ss[ok2], T_MIN, T_MAX)
            t[miss] = tb
            branch[miss] = np.isfinite(tb) & (rr >= _geom(np.where(np.isfinite(tb), tb, 1.0))[2])

    t[(t < T_MIN) | (t > T_MAX)] = np.nan
    seg = np.full(n, -1, dtype=int)
    good = np.isfinite(t)
    tg = np.where(good, t, 1.0)
    _, _, wr, ws, _, _, _, _ = _geom(tg)
    vr = wr - 0.5 * ws
    arc_a1 = r >= vr
    seg = np.where(branch, np.where(lower, LeafSegment.J2, LeafSegment.J1),
                   np.where(arc_a1, np.where(lower, LeafSegment.A2, LeafSegment.A1), LeafSegment.A0))
    seg = np.where(good, seg, -1)
    return t, seg


def leaf_parameter(z) -> tuple[float, LeafSegment]:
    z = Point.of(z)
    t, seg = leaf_param_arr(np.array([[z.r, z.s]]))
    if not np.isfinite(t[0]):
        raise NotCovered(f"no leaf parameter in [{T_MIN}, {T_MAX}] for {z}")
    return float(t[0]), LeafSegment(int(seg[0]))


def _branch_step(r, s, t):
    """Branch step on the upper half: abscissa drops by ``s/2``; the image stays
    on the branch or, past ``w1``, on the upper arc with that abscissa."""
    cr, R, wr, ws, dwr, _, _, _ = _geom(t)
    p = r - 0.5 * s
    on_branch = p >= wr
    with np.errstate(divide="ignore", invalid="ignore"):
        s_branch = t / p
    dp = (p - wr) + dwr  # abscissa offset from the circle centre
    s_arc = np.sqrt(np.maximum(R * R - dp * dp, 0.0))
    return np.stack([p, np.where(on_branch, s_branch, s_arc)], axis=-1)


def _branch_unstep(r, t):
    """Inverse of the branch step: the branch point whose image has abscissa ``r``."""
    p = 0.5 * (r + np.sqrt(r * r + 2.0 * t))
    return np.stack([p, t / p], axis=-1)


def _arc_rotate(z, t, sign):
    cr, R, _, _, _, _, _, chord = _geom(t)
    theta = sign * chord_angle(R, chord)
    center = np.stack([cr, np.zeros_like(cr)], axis=-1)
    return rotate_about_arr(z, center, R, theta)


def _forward_upper_rules(z, t, seg):
    out = np.full_like(z, np.nan)
    m = seg == LeafSegment.J1
    if np.any(m):
        out[m] = _branch_step(z[m, 0], z[m, 1], t[m])
    m = (seg == LeafSegment.A1) | (seg == LeafSegment.A0)
    if np.any(m):
        out[m] = _arc_rotate(z[m], t[m], 1.0)
    return out


def _backward_upper_rules(z, t, seg):
    out = np.full_like(z, np.nan)
    m = (seg == LeafSegment.J1) | (seg == LeafSegment.A1)
    if np.any(m):
        out[m] = _branch_unstep(z[m, 0], t[m])
    m = (seg == LeafSegment.A0) | (seg == LeafSegment.A2)
    if np.any(m):
        out[m] = _arc_rotate(z[m], t[m], -1.0)
    return out


_MIRROR = {LeafSegment.J2: LeafSegment.J1, LeafSegment.A2: LeafSegment.A1,
           LeafSegment.J1: LeafSegment.J2, LeafSegment.A1: LeafSegment.A2}


def _mirror_seg(seg):
    out = seg.copy()
    for a, b in _MIRROR.items():
        out[seg == a] = b
    return out


def eval31_arr(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    t, seg = leaf_param_arr(z)
    out = _forward_upper_rules(z, t, seg)
    m = (seg == LeafSegment.A2) | (seg == LeafSegment.J2)
    if np.any(m):
        zr = reflect_arr(z[m])
        out[m] = reflect_arr(_backward_upper_rules(zr, t[m], _mirror_seg(seg[m])))
    return out


def eval31_inverse_arr(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    t, seg = leaf_param_arr(z)
    out = _backward_upper_rules(z, t, seg)
    m = seg == LeafSegment.J2
    if np.any(m):
        zr = reflect_arr(z[m])
        out[m] = reflect_arr(_forward_upper_rules(zr, t[m], _mirror_seg(seg[m])))
    return out


def eval31(z) -> Point:
    p = Point.of(z)
    out = eval31_arr(np.array([[p.r, p.s]]))[0]
    if not np.all(np.isfinite(out)):
        leaf_parameter(p)  # raises NotCovered
    return Point(out[0], out[1])


def eval31_inverse(z) -> Point:
    p = Point.of(z)
    out = eval31_inverse_arr(np.array([[p.r, p.s]]))[0]
    if not np.all(np.isfinite(out)):
        leaf_parameter(p)
    return Point(out[0], out[1])


def example31_handle() -> MapHandle:
    return MapHandle(
        label="example31",
        forward=eval31_arr,
        backward=eval31_inverse_arr,
        spec=Example31(),
    )
