"""Planar primitives: points, axis-aligned boxes, circles, reflection and
constant-chord rotation along a circle.

Scalar helpers work on :class:`Point`; the ``*_arr`` variants operate on
``(N, 2)`` float arrays and are what the map implementations use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

TOL_ON = 1e-9

Direction = Literal["ccw", "cw"]


class GeometryError(ValueError):
    pass


class NotOnCircle(GeometryError):
    pass


class ChordTooLong(GeometryError):
    pass


@dataclass(frozen=True)
class Point:
    r: float
    s: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and math.isfinite(self.s)):
            raise GeometryError(f"non-finite point ({self.r}, {self.s})")
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "s", float(self.s))

    def __iter__(self):
        yield self.r
        yield self.s

    def __sub__(self, other: "Point") -> "Point":
        return Point(self.r - other.r, self.s - other.s)

    def __add__(self, other: "Point") -> "Point":
        return Point(self.r + other.r, self.s + other.s)

    def norm(self) -> float:
        return math.hypot(self.r, self.s)

    def dist(self, other: "Point") -> float:
        return math.hypot(self.r - other.r, self.s - other.s)

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.s])

    @classmethod
    def of(cls, z) -> "Point":
        if isinstance(z, Point):
            return z
        r, s = z
        return cls(float(r), float(s))


@dataclass(frozen=True)
class BoxR:
    lo: Point
    hi: Point

    def __post_init__(self) -> None:
        if self.lo.r > self.hi.r or self.lo.s > self.hi.s:
            raise GeometryError(f"ill-ordered box {self.lo} .. {self.hi}")

    @classmethod
    def from_bounds(cls, r0: float, s0: float, r1: float, s1: float) -> "BoxR":
        return cls(Point(r0, s0), Point(r1, s1))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.lo.r, self.lo.s, self.hi.r, self.hi.s)

    @property
    def width(self) -> float:
        return self.hi.r - self.lo.r

    @property
    def height(self) -> float:
        return self.hi.s - self.lo.s

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def center(self) -> Point:
        return Point(0.5 * (self.lo.r + self.hi.r), 0.5 * (self.lo.s + self.hi.s))

    def is_degenerate(self) -> bool:
        return self.width <= 0 or self.height <= 0

    def contains(self, z) -> bool:
        r, s = z
        return self.lo.r <= r <= self.hi.r and self.lo.s <= s <= self.hi.s

    def intersects(self, other: "BoxR") -> bool:
        return (self.lo.r <= other.hi.r and other.lo.r <= self.hi.r
                and self.lo.s <= other.hi.s and other.lo.s <= self.hi.s)

    def intersection(self, other: "BoxR") -> "BoxR | None":
        if not self.intersects(other):
            return None
        return BoxR.from_bounds(max(self.lo.r, other.lo.r), max(self.lo.s, other.lo.s),
                                min(self.hi.r, other.hi.r), min(self.hi.s, other.hi.s))

    def distance_to(self, z) -> float:
        r, s = z
        dr = max(self.lo.r - r, 0.0, r - self.hi.r)
        ds = max(self.lo.s - s, 0.0, s - self.hi.s)
        return math.hypot(dr, ds)


@dataclass(frozen=True)
class CircleSpec:
    center: Point
    radius: float

    def __post_init__(self) -> None:
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError(f"circle radius must be positive, got {self.radius}")


def reflect(z: Point) -> Point:
    return Point(z.r, -z.s)


def reflect_arr(z: np.ndarray) -> np.ndarray:
    out = np.array(z, dtype=float, copy=True)
    out[..., 1] *= -1.0
    return out


def box_dilate(b: BoxR, pad: float) -> BoxR:
    if pad < 0:
        raise GeometryError("pad must be non-negative")
    return BoxR.from_bounds(b.lo.r - pad, b.lo.s - pad, b.hi.r + pad, b.hi.s + pad)


def chord_angle(radius, chord):
    """Rotation angle whose chord on a circle of ``radius`` equals ``chord``."""
    return 2.0 * np.arcsin(np.minimum(1.0, np.asarray(chord) / (2.0 * np.asarray(radius))))


def rotate_about_arr(z: np.ndarray, center: np.ndarray, radius, angle) -> np.ndarray:
    """Rotate points ``z`` about ``center`` by ``angle`` and snap them onto the
    circle of the given radius. All arguments broadcast over the leading axis."""
    rel = z - center
    c, s = np.cos(angle), np.sin(angle)
    rr = c * rel[..., 0] - s * rel[..., 1]
    ss = s * rel[..., 0] + c * rel[..., 1]
    n = np.hypot(rr, ss)
    scale = np.where(n > 0, radius / np.where(n > 0, n, 1.0), 1.0)
    return np.stack([center[..., 0] + rr * scale, center[..., 1] + ss * scale], axis=-1)


def chord_rotate(c: CircleSpec, z: Point, chord: float, direction: Direction) -> Point:
    """Move ``z`` along circle ``c`` so that the straight-line distance travelled
    equals ``chord``."""
    if direction not in ("ccw", "cw"):
        raise GeometryError(f"direction must be 'ccw' or 'cw', got {direction!r}")
    off = abs(z.dist(c.center) - c.radius)
    if off > TOL_ON:
        raise NotOnCircle(f"point {z} is {off:.3g} off the circle")
    if chord < 0:
        raise GeometryError("chord must be non-negative")
    if chord > 2.0 * c.radius * (1.0 + 1e-15):
        raise ChordTooLong(f"chord {chord} exceeds diameter {2 * c.radius}")
    if chord == 0:
        return z
    theta = float(chord_angle(c.radius, chord))
    if direction == "cw":
        theta = -theta
    out = rotate_about_arr(z.as_array(), c.center.as_array(), c.radius, theta)
    return Point(out[0], out[1])


def as_points(zs: Iterable) -> np.ndarray:
    arr = np.asarray([tuple(z) for z in zs] if not isinstance(zs, np.ndarray) else zs, dtype=float)
    return arr.reshape(-1, 2)
