"""The homeomorphism of the slit plane ``U = R^2 - R`` that slides points
along the pencil of circles through ``x = (-1, 0)`` and ``y = (1, 0)``.

Upper arcs flow toward ``x``, lower arcs toward ``y``; each step moves a
point by a chord of length ``d(z, {x, y}) / 2``.  In angular terms both
motions are counter-clockwise about the circle's centre ``(0, t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Point, chord_angle
from .maps import Example34, MapHandle

S_MIN = 1e-12
_BISECT_STEPS = 200
ANCHOR_X = Point(-1.0, 0.0)
ANCHOR_Y = Point(1.0, 0.0)


class OffDomain(ValueError):
    """The point lies on (or numerically on) the removed axis."""


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class PencilGeometry:
    t: float
    center: Point
    radius: float
    anchors: tuple[Point, Point] = (ANCHOR_X, ANCHOR_Y)


def in_domain(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    return np.all(np.isfinite(z), axis=-1) & (np.abs(z[:, 1]) >= S_MIN)


def boxes_in_domain(boxes: np.ndarray) -> np.ndarray:
    """True for boxes whose interior misses the removed axis."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    return ~((boxes[:, 1] < 0) & (boxes[:, 3] > 0))


def pencil_parameter(z) -> PencilGeometry:
    z = Point.of(z)
    if abs(z.s) < S_MIN:
        raise OffDomain(f"{z} lies on the removed axis")
    t = (z.r * z.r + z.s * z.s - 1.0) / (2.0 * z.s)
    return PencilGeometry(t=t, center=Point(0.0, t), radius=math.sqrt(t * t + 1.0))


def _offsets(z: np.ndarray):
    """Pencil parameter, radius and ``z - centre`` for each row.

    The ordinate offset ``s - t`` is evaluated as ``(s^2 - r^2 + 1) / (2 s)``,
    which stays accurate when the centre is far away.
    """
    r, s = z[:, 0], z[:, 1]
    t = (r * r + s * s - 1.0) / (2.0 * s)
    rel = np.stack([r, (s * s - r * r + 1.0) / (2.0 * s)], axis=-1)
    return t, np.hypot(t, 1.0), rel


def _turn(z: np.ndarray, rel: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Rotate by ``angle`` about ``z - rel`` in increment form."""
    cm1 = -2.0 * np.sin(0.5 * angle) ** 2
    sn = np.sin(angle)
    dr = cm1 * rel[:, 0] - sn * rel[:, 1]
    ds = sn * rel[:, 0] + cm1 * rel[:, 1]
    return np.stack([z[:, 0] + dr, z[:, 1] + ds], axis=-1)


def _anchor_distance(z: np.ndarray) -> np.ndarray:
    dx = np.hypot(z[:, 0] + 1.0, z[:, 1])
    dy = np.hypot(z[:, 0] - 1.0, z[:, 1])
    return np.minimum(dx, dy)


def _step_angle(z: np.ndarray, R: np.ndarray) -> np.ndarray:
    return chord_angle(R, 0.5 * _anchor_distance(z))


def eval34_arr(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    out = np.full_like(z, np.nan)
    ok = in_domain(z)
    if np.any(ok):
        zz = z[ok]
        _, R, rel = _offsets(zz)
        out[ok] = _turn(zz, rel, _step_angle(zz, R))
    return out


def _trailing_angle(rel: np.ndarray, t: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Counter-clockwise angle from the trailing anchor to the point.

    The trailing anchor is ``y`` on upper arcs and ``x`` on lower arcs.
    """
    ar = np.where(upper, 1.0, -1.0)
    a = np.stack([ar, -t], axis=-1)
    cross = a[:, 0] * rel[:, 1] - a[:, 1] * rel[:, 0]
    dot = a[:, 0] * rel[:, 0] + a[:, 1] * rel[:, 1]
    ang = np.arctan2(cross, dot)
    return np.where(ang <= 0, ang + 2.0 * math.pi, ang)


def eval34_inverse_arr(z: np.ndarray) -> np.ndarray:
    """Pre-images by bisection on the backward turning angle.

    ``phi -> step_angle(w(phi)) - phi`` is decreasing along the arc (the map
    is an orientation-preserving homeomorphism of each arc), positive at
    ``phi = 0`` and negative at the trailing anchor.
    """
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    out = np.full_like(z, np.nan)
    ok = in_domain(z)
    if not np.any(ok):
        return out
    zz = z[ok]
    t, R, rel = _offsets(zz)
    lo = np.zeros(len(zz))
    hi = _trailing_angle(rel, t, zz[:, 1] > 0)
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        w = _turn(zz, rel, -mid)
        g = _step_angle(w, R) - mid
        lo = np.where(g > 0, mid, lo)
        hi = np.where(g > 0, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(hi, 1e-300)):
            break
    else:
        if np.any(hi - lo > 1e-12):
            raise NoConvergence("pre-image bisection failed to converge")
    out[ok] = _turn(zz, rel, -0.5 * (lo + hi))
    return out


def _scalar(fn, z) -> Point:
    p = Point.of(z)
    if abs(p.s) < S_MIN:
        raise OffDomain(f"{p} lies on the removed axis")
    out = fn(np.array([[p.r, p.s]]))[0]
    return Point(out[0], out[1])


def eval34(z) -> Point:
    return _scalar(eval34_arr, z)


def eval34_inverse(z) -> Point:
    return _scalar(eval34_inverse_arr, z)


def example34_handle() -> MapHandle:
    return MapHandle(
        label="example34",
        forward=eval34_arr,
        backward=eval34_inverse_arr,
        domain=in_domain,
        spec=Example34(),
        box_domain=boxes_in_domain,
    )
