"""Evaluable plane homeomorphisms and a small algebra over them.

A :class:`MapHandle` wraps vectorised forward/backward functions acting on
``(N, 2)`` arrays.  Rows that leave the map's domain come back as NaN in the
array API; the scalar API (:meth:`MapHandle.eval`) raises :class:`DomainError`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .geometry import BoxR, Point

ArrayFn = Callable[[np.ndarray], np.ndarray]

EXPANSION_SAFETY = 1.5
EXPANSION_SAMPLES = 4


class DomainError(ValueError):
    """A point (or an intermediate image) left the map's domain."""


def _full_plane(z: np.ndarray) -> np.ndarray:
    return np.all(np.isfinite(z), axis=-1)


def _as_rows(z) -> tuple[np.ndarray, bool]:
    if isinstance(z, Point):
        return np.array([[z.r, z.s]]), True
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(1, 2), True
    return arr.reshape(-1, 2), False


def cell_sample_grid(boxes: np.ndarray, n: int = EXPANSION_SAMPLES) -> np.ndarray:
    """Sub-cell midpoints of an ``n x n`` split of each box.

    ``boxes`` is ``(M, 4)`` as ``(r0, s0, r1, s1)``; returns ``(M, n, n, 2)``.
    Midpoints keep every sample in the open box, which matters for cells whose
    edge lies on a removed set such as the slit of the example-34 domain.
    """
    frac = (np.arange(n) + 0.5) / n
    r = boxes[:, 0:1] + (boxes[:, 2:3] - boxes[:, 0:1]) * frac
    s = boxes[:, 1:2] + (boxes[:, 3:4] - boxes[:, 1:2]) * frac
    rr = np.broadcast_to(r[:, :, None], (len(boxes), n, n))
    ss = np.broadcast_to(s[:, None, :], (len(boxes), n, n))
    return np.stack([rr, ss], axis=-1)


def difference_quotient_bound(pts: np.ndarray, imgs: np.ndarray) -> np.ndarray:
    """Largest difference quotient between grid-adjacent samples.

    ``pts``/``imgs`` are ``(M, n, n, 2)``.  Horizontal, vertical and both
    diagonal neighbours are compared.  NaN images are ignored; a cell with no
    usable pair gets ``inf``.
    """
    best = np.full(pts.shape[0], -np.inf)
    pairs = (
        (np.s_[:, 1:, :], np.s_[:, :-1, :]),
        (np.s_[:, :, 1:], np.s_[:, :, :-1]),
        (np.s_[:, 1:, 1:], np.s_[:, :-1, :-1]),
        (np.s_[:, 1:, :-1], np.s_[:, :-1, 1:]),
    )
    for a, b in pairs:
        dz = np.linalg.norm(pts[a] - pts[b], axis=-1)
        dw = np.linalg.norm(imgs[a] - imgs[b], axis=-1)
        q = dw / dz
        q = np.where(np.isfinite(q), q, -np.inf).reshape(len(best), -1)
        best = np.maximum(best, q.max(axis=1))
    return np.where(best < 0, np.inf, best)


@dataclass(frozen=True, eq=False)
class MapHandle:
    label: str
    forward: ArrayFn
    backward: ArrayFn
    domain: ArrayFn = _full_plane
    lipschitz: float | None = None
    spec: "MapSpecAst | None" = field(default=None, repr=False)
    # (M, 4) boxes -> True where the whole open box lies in the domain;
    # None means the domain has no gaps a sample grid could miss
    box_domain: ArrayFn | None = field(default=None, repr=False)

    # scalar / convenience API -------------------------------------------------
    def eval(self, z):
        return self._apply(self.forward, z)

    def eval_inverse(self, z):
        return self._apply(self.backward, z)

    def __call__(self, z):
        return self.eval(z)

    def _apply(self, fn: ArrayFn, z):
        rows, scalar = _as_rows(z)
        ok = self.domain(rows)
        if not np.all(ok):
            raise DomainError(f"{self.label}: {rows[~ok][0].tolist()} is outside the domain")
        out = fn(rows)
        bad = ~np.all(np.isfinite(out), axis=-1)
        if np.any(bad):
            raise DomainError(f"{self.label}: evaluation failed at {rows[bad][0].tolist()}")
        if isinstance(z, Point):
            return Point(out[0, 0], out[0, 1])
        return out[0] if scalar else out

    def domain_contains(self, z):
        rows, scalar = _as_rows(z)
        ok = self.domain(rows)
        return bool(ok[0]) if scalar else ok

    def forward_arr(self, z: np.ndarray) -> np.ndarray:
        """Forward image of an ``(N, 2)`` array, NaN rows off the domain."""
        z = np.asarray(z, dtype=float).reshape(-1, 2)
        out = np.full_like(z, np.nan)
        ok = self.domain(z)
        if np.any(ok):
            out[ok] = self.forward(z[ok])
        return out

    def backward_arr(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, 2)
        out = np.full_like(z, np.nan)
        ok = self.domain(z)
        if np.any(ok):
            out[ok] = self.backward(z[ok])
        return out

    def iterate(self, z, n: int):
        """``f^n(z)``; negative ``n`` iterates the inverse."""
        fn = self.forward_arr if n >= 0 else self.backward_arr
        rows, scalar = _as_rows(z)
        for _ in range(abs(n)):
            rows = fn(rows)
        if np.any(~np.isfinite(rows)):
            raise DomainError(f"{self.label}: orbit left the domain")
        if isinstance(z, Point):
            return Point(rows[0, 0], rows[0, 1])
        return rows[0] if scalar else rows

    # expansion bounds --------------------------------------------------------
    def expansion_bounds(self, boxes: np.ndarray, samples: int = EXPANSION_SAMPLES) -> np.ndarray:
        """Upper bound estimate of the local Lipschitz constant per box.

        Exact for affine isometries; otherwise the largest sampled difference
        quotient on a ``samples x samples`` grid times ``EXPANSION_SAFETY``.
        """
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        if self.lipschitz is not None:
            return np.full(len(boxes), float(self.lipschitz))
        pts = cell_sample_grid(boxes, samples)
        imgs = self.forward_arr(pts.reshape(-1, 2)).reshape(pts.shape)
        return EXPANSION_SAFETY * difference_quotient_bound(pts, imgs)

    def expansion_bound(self, box: BoxR) -> float:
        return float(self.expansion_bounds(np.array([box.bounds]))[0])

    def inverse(self) -> "MapHandle":
        return inverse(self)


# fixtures ---------------------------------------------------------------------

def translation(dx: float, dy: float) -> MapHandle:
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise ValueError("translation offsets must be finite")
    d = np.array([dx, dy], dtype=float)
    return MapHandle(
        label=f"trans:{dx!r},{dy!r}",
        forward=lambda z: z + d,
        backward=lambda z: z - d,
        lipschitz=1.0,
        spec=Translation(dx, dy),
    )


def identity() -> MapHandle:
    return translation(0.0, 0.0)


def _rotator(cx: float, cy: float, theta: float) -> ArrayFn:
    c, s = math.cos(theta), math.sin(theta)
    ctr = np.array([cx, cy], dtype=float)

    def fn(z: np.ndarray) -> np.ndarray:
        rel = z - ctr
        return np.stack([ctr[0] + c * rel[:, 0] - s * rel[:, 1],
                         ctr[1] + s * rel[:, 0] + c * rel[:, 1]], axis=-1)
    return fn


def rotation(cx: float, cy: float, theta: float) -> MapHandle:
    return MapHandle(
        label=f"rot:{cx!r},{cy!r},{theta!r}",
        forward=_rotator(cx, cy, theta),
        backward=_rotator(cx, cy, -theta),
        lipschitz=1.0,
        spec=Rotation(cx, cy, theta),
    )


def scaling(cx: float, cy: float, factor: float) -> MapHandle:
    """Homothety about ``(cx, cy)``; ``0 < factor < 1`` contracts radially."""
    if not factor > 0:
        raise ValueError("scaling factor must be positive")
    ctr = np.array([cx, cy], dtype=float)
    return MapHandle(
        label=f"scale:{cx!r},{cy!r},{factor!r}",
        forward=lambda z: ctr + factor * (z - ctr),
        backward=lambda z: ctr + (z - ctr) / factor,
        lipschitz=float(factor),
        spec=Scaling(cx, cy, factor),
    )


def compose(a: MapHandle, b: MapHandle) -> MapHandle:
    """``a`` after ``b``."""
    def domain(z):
        ok = b.domain(z)
        if np.any(ok):
            inner = np.full_like(z, np.nan)
            inner[ok] = b.forward(z[ok])
            ok = ok & a.domain(inner)
        return ok

    lip = None if a.lipschitz is None or b.lipschitz is None else a.lipschitz * b.lipschitz
    return MapHandle(
        label=f"comp({a.label};{b.label})",
        forward=lambda z: a.forward_arr(b.forward_arr(z)),
        backward=lambda z: b.backward_arr(a.backward_arr(z)),
        domain=domain,
        lipschitz=lip,
        spec=Compose(a.spec, b.spec) if a.spec and b.spec else None,
        box_domain=b.box_domain,
    )


def inverse(a: MapHandle) -> MapHandle:
    # the bundled maps are self-maps of their domains, so the inverse shares it
    return MapHandle(
        label=f"inv({a.label})",
        forward=a.backward,
        backward=a.forward,
        domain=a.domain,
        lipschitz=None if a.lipschitz is None or a.lipschitz != 1.0 else 1.0,
        spec=Inverse(a.spec) if a.spec else None,
        box_domain=a.box_domain,
    )


def conjugate(a: MapHandle, h: MapHandle) -> MapHandle:
    """``h o a o h^-1``: ``a`` transported along ``h``."""
    inner = compose(a, inverse(h))
    out = compose(h, inner)
    lip = None
    if a.lipschitz is not None and h.lipschitz == 1.0:
        lip = a.lipschitz
    return MapHandle(
        label=f"conj({a.label};{h.label})",
        forward=out.forward,
        backward=out.backward,
        domain=out.domain,
        lipschitz=lip,
        spec=Conjugate(a.spec, h.spec) if a.spec and h.spec else None,
    )


def iterate_map(a: MapHandle, n: int) -> MapHandle:
    """The ``n``-fold composite ``a^n`` (``n >= 1``)."""
    if n < 1:
        raise ValueError("n must be >= 1")

    def fwd(z):
        for _ in range(n):
            z = a.forward_arr(z)
        return z

    def bwd(z):
        for _ in range(n):
            z = a.backward_arr(z)
        return z

    def domain(z):
        ok = a.domain(z)
        w = z.copy()
        for _ in range(n - 1):
            w = a.forward_arr(w)
            ok = ok & a.domain(w)
        return ok

    return MapHandle(
        label=f"{a.label}^{n}",
        forward=fwd,
        backward=bwd,
        domain=domain,
        lipschitz=None if a.lipschitz is None else a.lipschitz ** n,
        box_domain=a.box_domain,
    )


# map-spec syntax tree ------------------------------------------------------------

@dataclass(frozen=True)
class Example31:
    def build(self) -> MapHandle:
        from .example31 import example31_handle
        return example31_handle()

    def pretty(self) -> str:
        return "example31"


@dataclass(frozen=True)
class Example34:
    def build(self) -> MapHandle:
        from .example34 import example34_handle
        return example34_handle()

    def pretty(self) -> str:
        return "example34"


def _num(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class Translation:
    dx: float
    dy: float

    def build(self) -> MapHandle:
        return translation(self.dx, self.dy)

    def pretty(self) -> str:
        return f"trans:{_num(self.dx)},{_num(self.dy)}"


@dataclass(frozen=True)
class Rotation:
    cx: float
    cy: float
    theta: float

    def build(self) -> MapHandle:
        return rotation(self.cx, self.cy, self.theta)

    def pretty(self) -> str:
        return f"rot:{_num(self.cx)},{_num(self.cy)},{_num(self.theta)}"


@dataclass(frozen=True)
class Scaling:
    cx: float
    cy: float
    factor: float

    def build(self) -> MapHandle:
        return scaling(self.cx, self.cy, self.factor)

    def pretty(self) -> str:
        return f"scale:{_num(self.cx)},{_num(self.cy)},{_num(self.factor)}"


@dataclass(frozen=True)
class Compose:
    outer: "MapSpecAst"
    inner: "MapSpecAst"

    def build(self) -> MapHandle:
        return compose(self.outer.build(), self.inner.build())

    def pretty(self) -> str:
        return f"comp({self.outer.pretty()};{self.inner.pretty()})"


@dataclass(frozen=True)
class Inverse:
    arg: "MapSpecAst"

    def build(self) -> MapHandle:
        return inverse(self.arg.build())

    def pretty(self) -> str:
        return f"inv({self.arg.pretty()})"


@dataclass(frozen=True)
class Conjugate:
    map: "MapSpecAst"
    by: "MapSpecAst"

    def build(self) -> MapHandle:
        return conjugate(self.map.build(), self.by.build())

    def pretty(self) -> str:
        return f"conj({self.map.pretty()};{self.by.pretty()})"


MapSpecAst = Union[Example31, Example34, Translation, Rotation, Scaling,
                   Compose, Inverse, Conjugate]


def sampled_jacobian_det(f: MapHandle, z: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian determinant of ``f`` at each row of ``z``."""
    z = np.asarray(z, dtype=float).reshape(-1, 2)
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    fx = (f.forward_arr(z + ex) - f.forward_arr(z - ex)) / (2 * step)
    fy = (f.forward_arr(z + ey) - f.forward_arr(z - ey)) / (2 * step)
    return fx[:, 0] * fy[:, 1] - fx[:, 1] * fy[:, 0]
