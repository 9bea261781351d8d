"""Epsilon-chains: the data model, independent validation and construction of
concrete witness chains from a box graph."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from ..geometry import BoxR, Point
from ..maps import DomainError, MapHandle
from .graph import BoxGraph, PerturbationWindow, recurrent_nodes

ZERO_BAND = 1e-12
MISMATCH_TOL = 1e-12
MAX_BACKWARD_ORBIT = 4096


class NoCycle(ValueError):
    """The start cell is not on any cycle of the graph."""


class RealizationFailed(RuntimeError):
    """A cell cycle exists but no concrete chain was found."""


@dataclass(frozen=True)
class StepRecord:
    image: Point
    perturbation: float
    in_W: bool


@dataclass(frozen=True)
class EpsChain:
    points: tuple[Point, ...]
    eps: float
    steps: tuple[StepRecord, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("a chain needs at least two points")
        if len(self.steps) != len(self.points) - 1:
            raise ValueError("one step record per transition is required")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @classmethod
    def from_points(cls, f: MapHandle, points, eps: float,
                    W: PerturbationWindow | None = None) -> "EpsChain":
        pts = tuple(Point.of(p) for p in points)
        arr = np.array([[p.r, p.s] for p in pts])
        imgs = f.eval(arr[:-1])
        pert = np.hypot(*(imgs - arr[1:]).T)
        in_w = W.contains(imgs) if W is not None else np.zeros(len(imgs), bool)
        steps = tuple(StepRecord(Point(a, b), float(d), bool(w))
                      for (a, b), d, w in zip(imgs, pert, np.atleast_1d(in_w)))
        return cls(pts, float(eps), steps)

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def perturbations(self) -> list[float]:
        return [st.perturbation for st in self.steps]

    def nonzero_steps(self) -> list[int]:
        return [k for k, st in enumerate(self.steps) if st.perturbation > ZERO_BAND]

    def as_array(self) -> np.ndarray:
        return np.array([[p.r, p.s] for p in self.points])


@dataclass(frozen=True)
class ChainValidation:
    valid_eps: bool
    valid_bp: bool
    max_perturbation: float
    mismatches: int


def validate_chain(f: MapHandle, chain: EpsChain, W: PerturbationWindow | None = None) -> ChainValidation:
    """Recompute every step of ``chain`` from scratch.

    ``valid_bp`` additionally requires each nonzero perturbation (above the
    ``ZERO_BAND`` floating-point band) to start from an image inside ``W``;
    without ``W`` it equals ``valid_eps``.  Stored step records that disagree
    with the recomputation by more than ``MISMATCH_TOL`` are counted.
    """
    pts = chain.as_array()
    ok = f.domain_contains(pts)
    if not np.all(ok):
        raise DomainError(f"chain point {pts[~ok][0].tolist()} is outside the domain")
    imgs = f.eval(pts[:-1])
    pert = np.hypot(*(imgs - pts[1:]).T)
    valid_eps = bool(np.all(pert < chain.eps))
    if W is None:
        valid_bp = valid_eps
    else:
        moved = pert > ZERO_BAND
        valid_bp = valid_eps and bool(np.all(W.contains(imgs)[moved]))
    stored_img = np.array([[st.image.r, st.image.s] for st in chain.steps])
    stored_p = np.array(chain.perturbations)
    mism = (np.hypot(*(stored_img - imgs).T) > MISMATCH_TOL) | (np.abs(stored_p - pert) > MISMATCH_TOL)
    return ChainValidation(valid_eps, valid_bp, float(pert.max()), int(mism.sum()))


def _backward_orbit(f: MapHandle, start: np.ndarray, g: BoxGraph) -> np.ndarray:
    """``start, f^-1(start), f^-2(start), ...`` while inside the window."""
    win = g.window
    pts = [start]
    z = start[None, :]
    for _ in range(MAX_BACKWARD_ORBIT):
        z = f.backward_arr(z)
        if not np.all(np.isfinite(z)) or not win.contains(z[0]):
            break
        if np.hypot(*(z[0] - pts[-1])) < ZERO_BAND:
            break
        pts.append(z[0].copy())
    return np.array(pts)


def extract_witness_chain(g: BoxGraph, f: MapHandle, start, W: PerturbationWindow | None = None,
                          eps: float | None = None) -> EpsChain:
    """Realise a cycle of ``g`` through the cell of ``start`` as a concrete
    validated chain from ``start`` back to ``start``.

    The search is a 0-1 breadth-first search over cells: following the true
    orbit costs nothing, a perturbation costs one.  Each cell keeps the first
    concrete point that reached it.  Perturbations go only to graph successors
    of the current cell, are shorter than ``eps`` and, with ``W`` given, only
    start from images inside ``W``.  The chain closes when an image comes
    within ``eps`` of ``start`` or of a point of its backward orbit, the latter
    letting the chain finish along the exact orbit.
    """
    eps = g.eps if eps is None else eps
    if not eps > 0:
        raise ValueError("eps must be positive")
    z0 = np.array(tuple(Point.of(start)), dtype=float)
    c0 = g.node_of(g.grid.locate(z0))[0]
    if c0 < 0:
        raise NoCycle(f"start {tuple(z0)} is not in an active cell")
    rec = recurrent_nodes(g.n, g.src, g.dst)
    if not rec[c0]:
        raise NoCycle(f"cell of {tuple(z0)} is not chain recurrent in the graph")

    adj = g.adjacency()
    # only cells that can reach the start cell again are worth visiting
    back = csgraph.breadth_first_order(adj.T.tocsr(), c0, directed=True, return_predecessors=False)
    useful = np.zeros(g.n, bool)
    useful[back] = True

    targets = _backward_orbit(f, z0, g)
    tree = cKDTree(targets)
    boxes = g.cells()

    # node -> (point, parent node or -1, was the arrival a jump)
    point_of: dict[int, np.ndarray] = {}
    parent: dict[int, int] = {}
    first = f.forward_arr(z0[None, :])[0]

    def jump_ok(img: np.ndarray) -> bool:
        return W is None or bool(W.contains(img))

    def finish(node: int, img: np.ndarray) -> EpsChain | None:
        allowed = eps if jump_ok(img) else ZERO_BAND
        d, k = tree.query(img, distance_upper_bound=allowed)
        if not np.isfinite(d) or d >= allowed:
            return None
        path = []
        v = node
        while v != -1:
            path.append(point_of[v])
            v = parent[v]
        path.reverse()
        tail = targets[: k + 1][::-1]
        pts = [z0] + path[1:] + list(tail)
        return EpsChain.from_points(f, pts, eps, W)

    # the start point itself is the root; it is stored under a sentinel id
    ROOT = -2
    point_of[ROOT] = z0
    parent[ROOT] = -1
    res = finish(ROOT, first)
    if res is not None:
        return res
    visited = np.zeros(g.n, bool)
    dq: deque[tuple[int, np.ndarray]] = deque()

    def expand(node: int, x: np.ndarray) -> EpsChain | None:
        img = f.forward_arr(x[None, :])[0]
        if not np.all(np.isfinite(img)):
            return None
        res = finish(node, img)
        if res is not None:
            return res
        here = g.node_of(g.grid.locate(img))[0]
        if here >= 0 and useful[here] and not visited[here]:
            visited[here] = True
            point_of[here] = img
            parent[here] = node
            dq.appendleft((here, img))
        if not jump_ok(img):
            return None
        src_node = g.node_of(g.grid.locate(x))[0]
        if src_node < 0:
            return None
        succ = adj.indices[adj.indptr[src_node]:adj.indptr[src_node + 1]]
        succ = succ[useful[succ] & ~visited[succ]]
        if len(succ) == 0:
            return None
        b = boxes[succ]
        inset = 1e-9 * g.resolution
        tgt = np.stack([np.clip(img[0], b[:, 0] + inset, b[:, 2] - inset),
                        np.clip(img[1], b[:, 1] + inset, b[:, 3] - inset)], axis=-1)
        d = np.hypot(*(tgt - img).T)
        ok = d < eps
        for v, p in zip(succ[ok], tgt[ok]):
            visited[v] = True
            point_of[v] = p
            parent[v] = node
            dq.append((int(v), p))
        return None

    res = expand(ROOT, z0)
    if res is not None:
        return res
    while dq:
        node, x = dq.popleft()
        res = expand(node, x)
        if res is not None:
            return res
    raise RealizationFailed("no concrete chain realises a cycle through the start cell")


@dataclass(frozen=True)
class WitnessSearch:
    chain: EpsChain | None
    window: BoxR | None
    tried: tuple[tuple[BoxR, str], ...]   # (window, outcome) per attempt


def adaptive_witness_search(f: MapHandle, start, eps: float, W: PerturbationWindow | None = None,
                            *, first: float = 8.0, last: float = 64.0, h: float | None = None,
                            require_jump: bool = False, cell_filter=None) -> WitnessSearch:
    """Look for a witness chain on the windows ``[-a, a]^2`` for ``a`` growing
    by a factor two from ``first`` to ``last``.

    ``h`` defaults to ``eps / 4``.  With ``require_jump`` a chain with no
    nonzero perturbation (an exact periodic orbit) does not count.
    """
    from .graph import build_box_graph
    h = eps / 4 if h is None else h
    tried = []
    a = first
    while a <= last * (1 + 1e-12):
        win = BoxR.from_bounds(-a, -a, a, a)
        try:
            g = build_box_graph(f, win, h, eps, cell_filter=cell_filter, bp_window=W)
            chain = extract_witness_chain(g, f, start, W, eps)
        except (NoCycle, RealizationFailed) as exc:
            tried.append((win, type(exc).__name__))
        else:
            if not require_jump or chain.nonzero_steps():
                tried.append((win, "found"))
                return WitnessSearch(chain, win, tuple(tried))
            tried.append((win, "exact orbit only"))
        a *= 2
    return WitnessSearch(None, None, tuple(tried))
