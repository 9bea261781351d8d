"""Fixed and periodic points: winding numbers of the displacement field,
quadtree location of zeros of ``f(z) - z``, periodic-orbit search and the
periodic / non-wandering / BP-chain-recurrent implication harness."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .geometry import BoxR, Point
from .maps import (Compose, Conjugate, DomainError, Example34, Inverse, MapHandle, iterate_map,
                   sampled_jacobian_det)

VANISH_TOL = 1e-12
MAX_LOOP_SAMPLES = 2 ** 20
MAX_NODES = 1_000_000
TOL_FIX = 1e-9
MAX_PERIOD = 64
ENLARGE_STEPS = 10
_SAMPLES = 5
_MIN_CONTINUUM_DEPTH = 4
_MIN_CONTINUUM_SIDE = 64    # in units of tol
_NEWTON_STEPS = 60

PointMask = Callable[[np.ndarray], np.ndarray]


class VanishingOnLoop(ValueError):
    """The displacement vanishes (numerically) at a loop sample."""


class RefinementCapExceeded(RuntimeError):
    pass


class BudgetExceeded(RuntimeError):
    """The subdivision used more than the allowed number of boxes."""


class OrientationReversing(ValueError):
    """A sampled Jacobian determinant is negative."""


# winding ----------------------------------------------------------------------

@dataclass(frozen=True)
class LoopPath:
    """Closed polygon; the last vertex joins the first."""
    vertices: tuple[Point, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise ValueError("a loop needs at least three vertices")

    @classmethod
    def of(cls, pts) -> "LoopPath":
        return cls(tuple(Point.of(p) for p in np.asarray(pts, dtype=float).reshape(-1, 2)))

    @classmethod
    def square(cls, box) -> "LoopPath":
        b = box if isinstance(box, BoxR) else BoxR.from_bounds(*box)
        return cls.of([(b.lo.r, b.lo.s), (b.hi.r, b.lo.s), (b.hi.r, b.hi.s), (b.lo.r, b.hi.s)])

    @classmethod
    def circle(cls, center, radius: float, n: int = 32) -> "LoopPath":
        c = Point.of(center)
        a = 2 * np.pi * np.arange(n) / n
        return cls.of(np.stack([c.r + radius * np.cos(a), c.s + radius * np.sin(a)], axis=-1))

    def as_array(self) -> np.ndarray:
        return np.array([[p.r, p.s] for p in self.vertices])

    def refined(self, k: int = 2) -> "LoopPath":
        """Same polygon with every edge split into ``k`` pieces."""
        v = self.as_array()
        w = np.roll(v, -1, axis=0)
        u = np.arange(k)[None, :, None] / k
        return LoopPath.of((v[:, None, :] * (1 - u) + w[:, None, :] * u).reshape(-1, 2))


def _displacement(f: MapHandle, z: np.ndarray) -> np.ndarray:
    img = f.forward_arr(z)
    bad = ~np.all(np.isfinite(img), axis=-1)
    if bad.any():
        raise DomainError(f"loop point {z[bad][0].tolist()} is outside the domain of {f.label}")
    d = img - z
    small = np.hypot(d[:, 0], d[:, 1]) < VANISH_TOL
    if small.any():
        raise VanishingOnLoop(f"displacement vanishes at {z[small][0].tolist()}")
    return d


def displacement_winding(f: MapHandle, loop: LoopPath, max_samples: int = MAX_LOOP_SAMPLES) -> int:
    """Degree of ``z -> f(z) - z`` around ``loop``.

    Loop edges are bisected wherever the displacement turns by ``pi/2`` or
    more between consecutive samples.
    """
    pts = loop.as_array()
    d = _displacement(f, pts)
    while True:
        ang = np.arctan2(d[:, 1], d[:, 0])
        step = np.angle(np.exp(1j * (np.roll(ang, -1) - ang)))
        coarse = np.abs(step) >= np.pi / 2
        if not coarse.any():
            return int(round(step.sum() / (2 * np.pi)))
        if len(pts) + coarse.sum() > max_samples:
            raise RefinementCapExceeded(f"more than {max_samples} loop samples needed")
        idx = np.flatnonzero(coarse)
        mid = 0.5 * (pts[idx] + np.roll(pts, -1, axis=0)[idx])
        dm = _displacement(f, mid)
        pts = np.insert(pts, idx + 1, mid, axis=0)
        d = np.insert(d, idx + 1, dm, axis=0)


# fixed points -----------------------------------------------------------------

@dataclass(frozen=True)
class FixedPoint:
    location: Point
    residual: float
    winding: int | None     # None when no isolating loop could be evaluated


@dataclass(frozen=True)
class PeriodicOrbit:
    period: int
    orbit: tuple[Point, ...]
    residual: float


@dataclass(frozen=True)
class FixReport:
    fixed_points: tuple[FixedPoint, ...]
    periodic: tuple[PeriodicOrbit, ...]
    window: BoxR
    tol: float
    nodes: int = 0
    continuum: bool = False   # a whole box of numerically fixed points was met

    def to_tree(self) -> dict:
        return {
            "fixed_points": [{"location": [p.location.r, p.location.s], "residual": p.residual,
                              "winding": p.winding} for p in self.fixed_points],
            "periodic": [{"period": o.period, "orbit": [[q.r, q.s] for q in o.orbit],
                          "residual": o.residual} for o in self.periodic],
            "tol": self.tol,
            "nodes": self.nodes,
            "continuum": self.continuum,
        }


def _box_samples(boxes: np.ndarray, n: int = _SAMPLES) -> np.ndarray:
    u = np.linspace(0.0, 1.0, n)
    r = boxes[:, 0, None] + (boxes[:, 2] - boxes[:, 0])[:, None] * u
    s = boxes[:, 1, None] + (boxes[:, 3] - boxes[:, 1])[:, None] * u
    R = np.broadcast_to(r[:, :, None], (len(boxes), n, n))
    S = np.broadcast_to(s[:, None, :], (len(boxes), n, n))
    return np.stack([R, S], axis=-1)


def _split(boxes: np.ndarray) -> np.ndarray:
    mr = 0.5 * (boxes[:, 0] + boxes[:, 2])
    ms = 0.5 * (boxes[:, 1] + boxes[:, 3])
    r0, s0, r1, s1 = boxes.T
    kids = [np.stack(k, axis=-1) for k in ((r0, s0, mr, ms), (mr, s0, r1, ms),
                                           (r0, ms, mr, s1), (mr, ms, r1, s1))]
    return np.concatenate(kids)


def _newton(f: MapHandle, z: np.ndarray, scale: float) -> np.ndarray:
    """Newton iteration on ``f(z) - z`` with a finite-difference Jacobian."""
    best = z.copy()
    gb = f.forward_arr(best[None])[0] - best
    rb = float(np.hypot(*gb)) if np.all(np.isfinite(gb)) else math.inf
    for _ in range(_NEWTON_STEPS):
        if rb == 0.0:
            break
        step = max(1e-7 * max(1.0, float(np.abs(best).max())), 1e-3 * rb)
        pts = np.array([best, best + (step, 0.0), best + (0.0, step)])
        g = f.forward_arr(pts) - pts
        if not np.all(np.isfinite(g)):
            break
        J = np.stack([(g[1] - g[0]) / step, (g[2] - g[0]) / step], axis=-1)
        try:
            dz = np.linalg.solve(J, -g[0])
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dz)) or np.hypot(*dz) > 4 * scale:
            break
        cand = best + dz
        gc = f.forward_arr(cand[None])[0] - cand
        rc = float(np.hypot(*gc)) if np.all(np.isfinite(gc)) else math.inf
        if rc >= rb:
            break
        best, rb = cand, rc
    return best


def _winding_around(f: MapHandle, z: np.ndarray, radius: float) -> int | None:
    for rad in (radius, 0.5 * radius, 2.0 * radius):
        try:
            return displacement_winding(f, LoopPath.circle(z, rad, 16), max_samples=4096)
        except (VanishingOnLoop, RefinementCapExceeded, DomainError):
            continue
    return None


def locate_fixed_points(f: MapHandle, window, tol: float = TOL_FIX, *,
                        max_nodes: int = MAX_NODES, avoid: PointMask | None = None,
                        winding: bool = True) -> FixReport:
    """Zeros of ``f(z) - z`` in ``window`` by quadtree subdivision.

    A box is discarded when the smallest displacement over a 5x5 sample grid
    exceeds ``(L + 1) * diag / 8``, ``L`` being the map's expansion bound on the
    box: every point of the box is within ``diag / 8`` of a sample and the
    displacement is ``(L + 1)``-Lipschitz.  Survivors are split until their side
    is at most ``tol``, then grouped into clusters of touching boxes and
    polished by Newton's method; a cluster is reported when its best point
    has residual below ``tol``.

    Boxes wider than ``64 * tol`` on which every sample is displaced by less
    than ``tol`` are taken to be pieces of a continuum of fixed points: they
    stop splitting (after a few levels) and report their centre, and the
    report is flagged ``continuum``.  Reported points closer than ``10 * tol``
    are merged.

    ``avoid`` marks excluded points; a box is dropped when its four corners
    are all excluded (exact for convex excluded sets) and reported points
    must not be excluded.
    """
    if not tol >= 1e-12:
        raise ValueError("tol must be at least 1e-12")
    win = window if isinstance(window, BoxR) else BoxR.from_bounds(*window)
    if win.is_degenerate():
        raise ValueError("window is degenerate")
    boxes = np.array([[win.lo.r, win.lo.s, win.hi.r, win.hi.s]])
    nodes = 1
    depth = 0
    found: list[np.ndarray] = []
    cont: list[np.ndarray] = []
    leaves: list[np.ndarray] = []
    while len(boxes):
        if avoid is not None:
            corners = boxes[:, [0, 1, 2, 1, 2, 3, 0, 3]].reshape(-1, 2)
            gone = np.all(np.asarray(avoid(corners), bool).reshape(-1, 4), axis=1)
            boxes = boxes[~gone]
        pts = _box_samples(boxes)
        flat = pts.reshape(-1, 2)
        img = f.forward_arr(flat)
        g = np.hypot(*(img - flat).T).reshape(len(boxes), -1)
        finite = np.isfinite(g)
        has = finite.any(axis=1)
        gmin = np.where(has, np.nanmin(np.where(finite, g, np.inf), axis=1), np.inf)
        gmax = np.where(has, np.nanmax(np.where(finite, g, -np.inf), axis=1), np.inf)
        w = boxes[:, 2] - boxes[:, 0]
        diag = np.hypot(w, boxes[:, 3] - boxes[:, 1])
        L = f.expansion_bounds(boxes)
        L = np.where(np.isfinite(L), L, np.inf)
        keep = has & (gmin <= (L + 1.0) * diag / 8)
        boxes, g, gmin, gmax, w, pts = boxes[keep], g[keep], gmin[keep], gmax[keep], w[keep], pts[keep]
        flatfull = np.all(np.isfinite(g), axis=1) & (gmax < tol)
        # near an isolated zero tiny boxes are flat too; a plateau must be wide
        plateau = flatfull & (depth >= _MIN_CONTINUUM_DEPTH) & (w >= _MIN_CONTINUUM_SIDE * tol)
        if plateau.any():
            cont.append(boxes[plateau])
        done = ~plateau & (w <= tol)
        if done.any():
            leaves.append(boxes[done])
        boxes = boxes[~plateau & ~done]
        if len(boxes):
            boxes = _split(boxes)
            nodes += len(boxes)
            depth += 1
            if nodes > max_nodes:
                raise BudgetExceeded(f"subdivision exceeded {max_nodes} boxes")

    pts_out: list[tuple[np.ndarray, float, int | None]] = []
    if cont:
        c = np.concatenate(cont)
        centers = 0.5 * (c[:, :2] + c[:, 2:])
        res = np.hypot(*(f.forward_arr(centers) - centers).T)
        for z, r in zip(centers, res):
            if r < tol:
                pts_out.append((z, float(r), None))
    if leaves:
        lv = np.concatenate(leaves)
        side = float(np.max(lv[:, 2] - lv[:, 0]))
        centers = 0.5 * (lv[:, :2] + lv[:, 2:])
        pairs = cKDTree(centers).query_pairs(1.5 * side * math.sqrt(2), output_type="ndarray")
        adj = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                            shape=(len(centers), len(centers)))
        ncl, lab = csgraph.connected_components(adj, directed=False)
        for k in range(ncl):
            mem = centers[lab == k]
            res = np.hypot(*(f.forward_arr(mem) - mem).T)
            z0 = mem[int(np.nanargmin(res))]
            span = float(np.ptp(mem, axis=0).max()) + side
            z = _newton(f, z0, span)
            r = float(np.hypot(*(f.forward_arr(z[None])[0] - z)))
            if not r < tol:
                continue
            wnd = _winding_around(f, z, max(span, 1e-6)) if winding else None
            pts_out.append((z, r, wnd))
    pts_out = _dedupe(pts_out, tol)
    if avoid is not None and pts_out:
        bad = np.asarray(avoid(np.array([p[0] for p in pts_out])), bool)
        pts_out = [p for p, b in zip(pts_out, bad) if not b]
    fps = tuple(FixedPoint(Point(float(z[0]), float(z[1])), r, wnd) for z, r, wnd in pts_out)
    return FixReport(fps, (), win, float(tol), nodes=nodes, continuum=bool(cont))


def _dedupe(pts: list, tol: float) -> list:
    """Merge reported points closer than ``10 * tol``, keeping the smallest
    residual of each group."""
    if len(pts) < 2:
        return pts
    z = np.array([p[0] for p in pts])
    pairs = cKDTree(z).query_pairs(10 * tol, output_type="ndarray")
    adj = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(z), len(z)))
    ncl, lab = csgraph.connected_components(adj, directed=False)
    out = []
    for k in range(ncl):
        mem = [pts[i] for i in np.flatnonzero(lab == k)]
        out.append(min(mem, key=lambda p: p[1]))
    return out


# periodic orbits --------------------------------------------------------------

def _orbit(f: MapHandle, z: np.ndarray, n: int) -> np.ndarray:
    out = [z]
    for _ in range(n - 1):
        out.append(f.forward_arr(out[-1][None])[0])
    return np.array(out)


def find_periodic_orbit(f: MapHandle, window, max_period: int, tol: float = TOL_FIX, *,
                        max_nodes: int = MAX_NODES, avoid: PointMask | None = None) -> FixReport:
    """Periodic orbits of minimal period ``1..max_period`` meeting ``window``.

    Fixed points of ``f^n`` are located in the window; points returning
    within ``tol`` after a proper divisor of ``n`` steps are dropped, and
    orbits already listed (some point within ``10 * tol``) are merged.
    Period-one hits are listed as fixed points.
    """
    if not 1 <= max_period <= MAX_PERIOD:
        raise ValueError(f"max_period must be in 1..{MAX_PERIOD}")
    win = window if isinstance(window, BoxR) else BoxR.from_bounds(*window)
    fixed: list[FixedPoint] = []
    orbits: list[PeriodicOrbit] = []
    seen: list[np.ndarray] = []
    nodes = 0
    cont = False
    for n in range(1, max_period + 1):
        fn = f if n == 1 else iterate_map(f, n)
        rep = locate_fixed_points(fn, win, tol, max_nodes=max_nodes, avoid=avoid, winding=(n == 1))
        nodes += rep.nodes
        cont |= rep.continuum
        if n == 1:
            fixed.extend(rep.fixed_points)
            seen.extend(np.array([[p.location.r, p.location.s]]) for p in rep.fixed_points)
            continue
        divisors = [d for d in range(1, n) if n % d == 0]
        tree = cKDTree(np.concatenate(seen)) if seen else None
        for p in rep.fixed_points:
            z = np.array([p.location.r, p.location.s])
            orb = _orbit(f, z, n)
            if not np.all(np.isfinite(orb)):
                continue
            if any(np.hypot(*(orb[d] - z)) < tol for d in divisors):
                continue
            if tree is not None and np.isfinite(tree.query(z, distance_upper_bound=10 * tol)[0]):
                continue
            orbits.append(PeriodicOrbit(n, tuple(Point(float(a), float(b)) for a, b in orb), p.residual))
            seen.append(orb)
            tree = cKDTree(np.concatenate(seen))
    return FixReport(tuple(fixed), tuple(orbits), win, float(tol), nodes=nodes, continuum=cont)


# implication harness ----------------------------------------------------------

HYPOTHESES = ("periodic", "nonwandering", "bp_chain_recurrent")
PLANE = "plane homeomorphism"
NOT_PLANE = "not a plane homeomorphism"


@dataclass(frozen=True)
class ImplicationParams:
    h: float = 0.05
    eps: float = 0.1
    W: object | None = None          # PerturbationWindow; defaults to the window
    K: int = 32
    tol: float = TOL_FIX
    max_period: int = 8
    refine: int = 0
    cell_filter: Callable | None = None
    avoid: PointMask | None = None
    jacobian_grid: int = 24


@dataclass(frozen=True)
class ImplicationResult:
    hypothesis: str
    hypothesis_found: bool
    fixed_point_found: bool
    hypothesis_class: str
    counterexample: bool
    fix_report: FixReport
    detector: object = None
    windows: tuple[BoxR, ...] = field(default_factory=tuple)


def _mentions_example34(node) -> bool:
    if isinstance(node, Example34):
        return True
    if isinstance(node, Compose):
        return _mentions_example34(node.outer) or _mentions_example34(node.inner)
    if isinstance(node, Inverse):
        return _mentions_example34(node.arg)
    if isinstance(node, Conjugate):
        return _mentions_example34(node.map) or _mentions_example34(node.by)
    return False


def hypothesis_class(f: MapHandle, window: BoxR) -> str:
    """``PLANE`` unless the map is known, or observed on a sample grid, to be
    defined on less than the whole plane."""
    if f.spec is not None and _mentions_example34(f.spec):
        return NOT_PLANE
    u = np.linspace(0.0, 1.0, 33)
    r = window.lo.r + (window.hi.r - window.lo.r) * u
    s = window.lo.s + (window.hi.s - window.lo.s) * u
    z = np.stack(np.meshgrid(r, s, indexing="ij"), axis=-1).reshape(-1, 2)
    return PLANE if bool(np.all(f.domain_contains(z))) else NOT_PLANE


def orientation_guard(f: MapHandle, window: BoxR, n: int = 24) -> None:
    """Raise :class:`OrientationReversing` when a sampled Jacobian determinant
    is negative; off-domain samples are skipped."""
    u = (np.arange(n) + 0.5) / n
    r = window.lo.r + (window.hi.r - window.lo.r) * u
    s = window.lo.s + (window.hi.s - window.lo.s) * u
    z = np.stack(np.meshgrid(r, s, indexing="ij"), axis=-1).reshape(-1, 2)
    step = 1e-6 * max(1.0, window.width, window.height)
    ok = f.domain_contains(z) & f.domain_contains(z + step) & f.domain_contains(z - step)
    det = sampled_jacobian_det(f, z[ok], step=step)
    det = det[np.isfinite(det)]
    if det.size and det.min() < 0:
        raise OrientationReversing(f"{f.label}: sampled Jacobian determinant {det.min():.3g} < 0")


def _grow(win: BoxR, factor: float) -> BoxR:
    c = win.center
    hw, hh = factor * win.width / 2, factor * win.height / 2
    return BoxR.from_bounds(c.r - hw, c.s - hh, c.r + hw, c.s + hh)


def check_implication(f: MapHandle, hypothesis: str, window, params: ImplicationParams | None = None
                      ) -> ImplicationResult:
    """Run the detector for ``hypothesis`` and the fixed-point locator.

    When the hypothesis holds but the window holds no fixed point the
    locator is re-run on windows grown by a factor two, up to ``2**10``.
    A counterexample is flagged only for orientation preserving maps of the
    whole plane.
    """
    from .chaindyn.graph import (PerturbationWindow, build_box_graph, chain_recurrent_cells,
                                 omega_candidate_cells)
    if hypothesis not in HYPOTHESES:
        raise ValueError(f"unknown hypothesis {hypothesis!r}; expected one of {HYPOTHESES}")
    p = params or ImplicationParams()
    win = window if isinstance(window, BoxR) else BoxR.from_bounds(*window)
    orientation_guard(f, win, p.jacobian_grid)
    klass = hypothesis_class(f, win)

    if hypothesis == "periodic":
        det = find_periodic_orbit(f, win, p.max_period, p.tol, avoid=p.avoid)
        found = bool(det.fixed_points or det.periodic)
    elif hypothesis == "nonwandering":
        det = omega_candidate_cells(f, win, p.h, p.K, refine=p.refine, cell_filter=p.cell_filter)
        found = bool(len(det))
    else:
        W = p.W if p.W is not None else PerturbationWindow((win,))
        g = build_box_graph(f, win, p.h, p.eps, cell_filter=p.cell_filter, bp_window=W)
        det = chain_recurrent_cells(g)
        found = bool(len(det))

    rep = locate_fixed_points(f, win, p.tol, avoid=p.avoid)
    windows = [win]
    if found and not rep.fixed_points:
        cur = win
        for _ in range(ENLARGE_STEPS):
            cur = _grow(cur, 2.0)
            windows.append(cur)
            try:
                rep = locate_fixed_points(f, cur, p.tol, avoid=p.avoid)
            except BudgetExceeded:
                break
            if rep.fixed_points:
                break
    fp = bool(rep.fixed_points)
    counter = found and not fp and klass == PLANE
    return ImplicationResult(hypothesis, found, fp, klass, counter, rep, det, tuple(windows))
