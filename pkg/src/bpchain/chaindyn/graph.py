"""Box graphs: outer approximations of the one-step epsilon-chain relation.

A window is cut into square cells of side ``h``.  For every cell ``B`` the
image ``f(B)`` is enclosed by the bounding box of the images of a 4x4 grid of
sample points, padded by ``L(B) * h * sqrt(2) / 2`` where ``L(B)`` is the map's
expansion bound on ``B``.  Edges:

* exact: the enclosure meets ``B'``;
* perturbed: the enclosure dilated by ``eps`` meets ``B'`` but the enclosure
  itself does not.

Cells are addressed by ``(i, j)`` (column, row) and stored as flat ids
``i * ny + j``.  A graph may hold only a subset of the grid's cells, which is
how the subdivision driver refines recurrent cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse import csgraph

from ..geometry import BoxR
from ..maps import MapHandle, EXPANSION_SAFETY, cell_sample_grid, difference_quotient_bound

MAX_CELLS = 10_000_000
IMAGE_SAMPLES = 4
ENCLOSURE_SLACK = 1e-9
DEFAULT_DEPTH = 64
_CHUNK = 20_000

CellFilter = Callable[[np.ndarray], np.ndarray]


class TooManyCells(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationWindow:
    """The bounded set ``W`` where nonzero perturbations are allowed.

    Held as a union of boxes; a single box is the common case.
    """
    regions: tuple[BoxR, ...]

    def __post_init__(self) -> None:
        if not self.regions:
            raise ValueError("perturbation window needs at least one box")
        for b in self.regions:
            if not all(math.isfinite(v) for v in b.bounds):
                raise ValueError("perturbation window must be bounded")

    @classmethod
    def box(cls, r0: float, s0: float, r1: float, s1: float) -> "PerturbationWindow":
        return cls((BoxR.from_bounds(r0, s0, r1, s1),))

    @property
    def region(self) -> BoxR:
        return self.regions[0]

    def bounds_array(self) -> np.ndarray:
        return np.array([b.bounds for b in self.regions], dtype=float)

    def contains(self, z) -> np.ndarray | bool:
        arr = np.asarray(z, dtype=float)
        pts = arr.reshape(-1, 2)
        b = self.bounds_array()
        inside = ((pts[:, None, 0] >= b[None, :, 0]) & (pts[:, None, 0] <= b[None, :, 2])
                  & (pts[:, None, 1] >= b[None, :, 1]) & (pts[:, None, 1] <= b[None, :, 3]))
        out = inside.any(axis=1)
        return bool(out[0]) if arr.ndim == 1 else out

    def meets_boxes(self, boxes: np.ndarray, pad: float = 0.0) -> np.ndarray:
        """Which of ``boxes`` (``(M, 4)``) meet ``W`` dilated by ``pad``."""
        b = self.bounds_array()
        return ((boxes[:, None, 0] <= b[None, :, 2] + pad) & (boxes[:, None, 2] >= b[None, :, 0] - pad)
                & (boxes[:, None, 1] <= b[None, :, 3] + pad) & (boxes[:, None, 3] >= b[None, :, 1] - pad)
                ).any(axis=1)


@dataclass(frozen=True, eq=False)
class Grid:
    window: BoxR
    h: float
    nx: int
    ny: int

    @classmethod
    def over(cls, window: BoxR, h: float) -> "Grid":
        if not h > 0:
            raise ValueError("cell side must be positive")
        if window.is_degenerate():
            raise ValueError("window must have positive width and height")
        nx = max(1, int(math.ceil(window.width / h - 1e-9)))
        ny = max(1, int(math.ceil(window.height / h - 1e-9)))
        return cls(window, float(h), nx, ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def refined(self) -> "Grid":
        return Grid(self.window, self.h / 2, self.nx * 2, self.ny * 2)

    def ij(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ids = np.asarray(ids, dtype=np.int64)
        return ids // self.ny, ids % self.ny

    def flat(self, i, j) -> np.ndarray:
        return np.asarray(i, dtype=np.int64) * self.ny + np.asarray(j, dtype=np.int64)

    def boxes(self, ids: np.ndarray) -> np.ndarray:
        i, j = self.ij(ids)
        r0 = self.window.lo.r + i * self.h
        s0 = self.window.lo.s + j * self.h
        return np.stack([r0, s0, r0 + self.h, s0 + self.h], axis=-1)

    def locate(self, z: np.ndarray) -> np.ndarray:
        """Flat id of the cell containing each point, ``-1`` outside."""
        z = np.asarray(z, dtype=float).reshape(-1, 2)
        with np.errstate(invalid="ignore"):
            fi = np.floor((z[:, 0] - self.window.lo.r) / self.h)
            fj = np.floor((z[:, 1] - self.window.lo.s) / self.h)
        # points on the far edge of the window belong to the last cell
        fi = np.where(z[:, 0] == self.window.hi.r, self.nx - 1, fi)
        fj = np.where(z[:, 1] == self.window.hi.s, self.ny - 1, fj)
        ok = np.isfinite(fi) & np.isfinite(fj) & (fi >= 0) & (fi < self.nx) & (fj >= 0) & (fj < self.ny)
        out = np.full(len(z), -1, dtype=np.int64)
        out[ok] = self.flat(fi[ok].astype(np.int64), fj[ok].astype(np.int64))
        return out

    def index_range(self, lo: np.ndarray, hi: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive index range of cells meeting ``[lo, hi]`` along an axis."""
        origin = self.window.lo.r if axis == 0 else self.window.lo.s
        n = self.nx if axis == 0 else self.ny
        a = np.ceil((lo - origin) / self.h - 1.0 - 1e-12)
        b = np.floor((hi - origin) / self.h + 1e-12)
        a = np.clip(a, 0, n).astype(np.int64)
        b = np.clip(b, -1, n - 1).astype(np.int64)
        return a, b


@dataclass(eq=False)
class BoxGraph:
    """Directed graph over grid cells.

    ``ids`` are the flat ids of the nodes (sorted); ``src``/``dst`` index into
    ``ids``; ``perturbed[k]`` tells whether edge ``k`` needs an
    ``eps``-perturbation.
    """
    grid: Grid
    eps: float
    ids: np.ndarray
    enclosures: np.ndarray
    pads: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    perturbed: np.ndarray
    excluded: np.ndarray
    bp_window: PerturbationWindow | None = None
    label: str = ""
    base_grid: Grid | None = None

    @property
    def window(self) -> BoxR:
        return self.grid.window

    @property
    def resolution(self) -> float:
        return self.grid.h

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def cells(self) -> np.ndarray:
        return self.grid.boxes(self.ids)

    def node_of(self, flat_ids: np.ndarray) -> np.ndarray:
        """Node positions of flat ids, ``-1`` when not a node."""
        flat_ids = np.asarray(flat_ids, dtype=np.int64)
        if self.n == 0:
            return np.full(flat_ids.shape, -1, dtype=np.int64)
        pos = np.clip(np.searchsorted(self.ids, flat_ids), 0, self.n - 1)
        return np.where(self.ids[pos] == flat_ids, pos, -1)

    def adjacency(self, kinds: str = "all") -> sp.csr_matrix:
        if kinds == "exact":
            m = ~self.perturbed
        elif kinds == "all":
            m = np.ones(self.n_edges, dtype=bool)
        else:
            raise ValueError(kinds)
        data = np.ones(int(m.sum()), dtype=np.int8)
        return sp.csr_matrix((data, (self.src[m], self.dst[m])), shape=(self.n, self.n))

    def exact_only(self) -> "BoxGraph":
        m = ~self.perturbed
        return replace(self, src=self.src[m], dst=self.dst[m], perturbed=self.perturbed[m], eps=0.0)

    def edge_set(self, kinds: str = "all") -> set[tuple[int, int]]:
        m = np.ones(self.n_edges, bool) if kinds == "all" else (~self.perturbed if kinds == "exact" else self.perturbed)
        return set(zip(self.ids[self.src[m]].tolist(), self.ids[self.dst[m]].tolist()))


def _sample_images(f: MapHandle, boxes: np.ndarray):
    pts = cell_sample_grid(boxes, IMAGE_SAMPLES)
    imgs = f.forward_arr(pts.reshape(-1, 2)).reshape(pts.shape)
    return pts, imgs


def _domain_ok(f: MapHandle, boxes: np.ndarray) -> np.ndarray:
    if f.box_domain is not None:
        return np.asarray(f.box_domain(boxes), dtype=bool)
    return np.ones(len(boxes), dtype=bool)


def enclose(f: MapHandle, boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded image enclosures of ``boxes``.

    Returns ``(enclosures, pads, ok)``; ``ok`` is False for cells touching the
    complement of the map's domain (their enclosure rows are NaN).
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    enc = np.full(boxes.shape, np.nan)
    pads = np.full(len(boxes), np.nan)
    ok = _domain_ok(f, boxes)
    for start in range(0, len(boxes), _CHUNK):
        sl = slice(start, start + _CHUNK)
        pts, imgs = _sample_images(f, boxes[sl])
        finite = np.all(np.isfinite(imgs), axis=(1, 2, 3))
        if f.lipschitz is not None:
            lip = np.full(len(pts), float(f.lipschitz))
        else:
            lip = EXPANSION_SAFETY * difference_quotient_bound(pts, imgs)
        diag = np.hypot(boxes[sl, 2] - boxes[sl, 0], boxes[sl, 3] - boxes[sl, 1])
        pad = lip * diag / 2.0 + ENCLOSURE_SLACK
        flat = imgs.reshape(len(pts), -1, 2)
        with np.errstate(invalid="ignore"):
            lo = flat.min(axis=1) - pad[:, None]
            hi = flat.max(axis=1) + pad[:, None]
        good = finite & np.isfinite(pad) & ok[sl]
        e = np.stack([lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1]], axis=1)
        e[~good] = np.nan
        enc[sl] = e
        pads[sl] = np.where(good, pad, np.nan)
        ok[sl] = good
    return enc, pads, ok


def _edges(grid: Grid, ids: np.ndarray, enc: np.ndarray, eps: float,
           keep_perturbed: np.ndarray | None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    srcs, dsts, kinds = [], [], []
    n = len(ids)
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(n, start + _CHUNK))
        e = enc[sl]
        node = np.arange(sl.start, sl.stop)
        allow = np.ones(len(e), bool) if keep_perturbed is None else keep_perturbed[sl]
        dil = np.where(allow, eps, 0.0)
        i0, i1 = grid.index_range(e[:, 0] - dil, e[:, 2] + dil, 0)
        j0, j1 = grid.index_range(e[:, 1] - dil, e[:, 3] + dil, 1)
        ie0, ie1 = grid.index_range(e[:, 0], e[:, 2], 0)
        je0, je1 = grid.index_range(e[:, 1], e[:, 3], 1)
        ni = np.maximum(i1 - i0 + 1, 0)
        nj = np.maximum(j1 - j0 + 1, 0)
        cnt = ni * nj
        total = int(cnt.sum())
        if total == 0:
            continue
        rep = np.repeat(np.arange(len(e)), cnt)
        k = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        njr = nj[rep]
        ii = i0[rep] + k // njr
        jj = j0[rep] + k % njr
        flat = grid.flat(ii, jj)
        pos = np.searchsorted(ids, flat)
        pos = np.clip(pos, 0, n - 1)
        hit = ids[pos] == flat
        exact = (ii >= ie0[rep]) & (ii <= ie1[rep]) & (jj >= je0[rep]) & (jj <= je1[rep])
        srcs.append(node[rep[hit]].astype(np.int32))
        dsts.append(pos[hit].astype(np.int32))
        kinds.append(~exact[hit])
    if not srcs:
        return np.zeros(0, np.int32), np.zeros(0, np.int32), np.zeros(0, bool)
    return np.concatenate(srcs), np.concatenate(dsts), np.concatenate(kinds)


def _as_box(window) -> BoxR:
    if isinstance(window, BoxR):
        return window
    return BoxR.from_bounds(*window)


def build_graph_on(f: MapHandle, grid: Grid, ids: np.ndarray, eps: float,
                   cell_filter: CellFilter | None = None,
                   bp_window: PerturbationWindow | None = None) -> BoxGraph:
    """Box graph on the listed cells of ``grid``.

    With ``bp_window`` the perturbed edges are filtered as they are generated,
    giving the same result as :func:`bp_filter` without materialising the
    unfiltered edge list.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    ids = np.unique(np.asarray(ids, dtype=np.int64))
    boxes = grid.boxes(ids)
    keep = np.ones(len(ids), bool) if cell_filter is None else np.asarray(cell_filter(boxes), bool)
    enc, pads, ok = enclose(f, boxes)
    ok &= keep
    excluded = ids[~ok]
    ids, enc, pads = ids[ok], enc[ok], pads[ok]
    allow = None if bp_window is None else bp_window.meets_boxes(enc, eps)
    src, dst, kind = _edges(grid, ids, enc, eps, allow)
    return BoxGraph(grid=grid, eps=float(eps), ids=ids, enclosures=enc, pads=pads,
                    src=src, dst=dst, perturbed=kind, excluded=excluded,
                    bp_window=bp_window, label=f.label)


def build_box_graph(f: MapHandle, window, h: float, eps: float,
                    cell_filter: CellFilter | None = None,
                    bp_window: PerturbationWindow | None = None) -> BoxGraph:
    window = _as_box(window)
    grid = Grid.over(window, h)
    if grid.size > MAX_CELLS:
        raise TooManyCells(f"{grid.nx} x {grid.ny} cells exceeds the {MAX_CELLS} cap")
    return build_graph_on(f, grid, np.arange(grid.size, dtype=np.int64), eps,
                          cell_filter=cell_filter, bp_window=bp_window)


def bp_filter(g: BoxGraph, W: PerturbationWindow) -> BoxGraph:
    """Keep exact edges, and perturbed edges out of cells whose enclosure
    meets ``W`` dilated by ``eps``."""
    allow = W.meets_boxes(g.enclosures, g.eps) if g.n else np.zeros(0, bool)
    m = ~g.perturbed | allow[g.src]
    return replace(g, src=g.src[m], dst=g.dst[m], perturbed=g.perturbed[m], bp_window=W)


# recurrence -------------------------------------------------------------------

def recurrent_nodes(n: int, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Boolean mask of nodes lying on a directed cycle.

    A node is recurrent when its strongly connected component has more than
    one node or it carries a self-loop.
    """
    if n == 0:
        return np.zeros(0, bool)
    adj = sp.csr_matrix((np.ones(len(src), np.int8), (src, dst)), shape=(n, n))
    _, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    sizes = np.bincount(labels)
    rec = sizes[labels] > 1
    loops = src[src == dst]
    rec[loops] = True
    return rec


def chain_recurrent_cells(g: BoxGraph) -> np.ndarray:
    """Flat ids of cells on a cycle of the graph (edges of both kinds)."""
    return g.ids[recurrent_nodes(g.n, g.src, g.dst)]


@njit(cache=True)
def _settle_short_cycles(indptr, indices, done, K):  # pragma: no cover - compiled
    """Depth-limited BFS from every unsettled node, stopping at the first edge
    back to the source; all nodes of a cycle found are settled at once."""
    n = len(indptr) - 1
    stamp = np.full(n, -1, np.int64)
    depth = np.zeros(n, np.int64)
    parent = np.zeros(n, np.int64)
    queue = np.zeros(n, np.int64)
    for v in range(n):
        if done[v]:
            continue
        stamp[v] = v
        depth[v] = 0
        head = 0
        tail = 1
        queue[0] = v
        hit = -1
        while head < tail and hit < 0:
            u = queue[head]
            head += 1
            if depth[u] + 1 > K:
                break
            for e in range(indptr[u], indptr[u + 1]):
                w = indices[e]
                if w == v:
                    hit = u
                    break
                if stamp[w] != v:
                    stamp[w] = v
                    depth[w] = depth[u] + 1
                    parent[w] = u
                    queue[tail] = w
                    tail += 1
        if hit >= 0:
            u = hit
            while u != v:
                done[u] = True
                u = parent[u]
            done[v] = True
    return done


def short_cycle_nodes(n: int, src: np.ndarray, dst: np.ndarray, K: int) -> np.ndarray:
    """Nodes on a directed cycle of length at most ``K``.

    A shortest cycle through ``v`` stays in the strongly connected component
    of ``v`` and is simple, so components with at most ``K`` nodes qualify
    outright.  Inside larger components a depth-limited breadth-first search
    runs from each node still unsettled.
    """
    out = np.zeros(n, bool)
    if n == 0 or K < 1:
        return out
    out[src[src == dst]] = True
    if K == 1:
        return out
    adj = sp.csr_matrix((np.ones(len(src), np.int8), (src, dst)), shape=(n, n))
    _, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    sizes = np.bincount(labels)
    out |= (sizes[labels] > 1) & (sizes[labels] <= K)
    big = sizes[labels] > K
    if not big.any():
        return out
    m = big[src] & (labels[src] == labels[dst]) & (src != dst)
    sub = np.flatnonzero(big)
    remap = np.full(n, -1, np.int64)
    remap[sub] = np.arange(len(sub))
    a = sp.csr_matrix((np.ones(int(m.sum()), np.int8), (remap[src[m]], remap[dst[m]])),
                      shape=(len(sub), len(sub)))
    done = _settle_short_cycles(a.indptr.astype(np.int64), a.indices.astype(np.int64),
                                out[sub].copy(), int(K))
    out[sub[done]] = True
    return out


def _children(grid: Grid, ids: np.ndarray) -> np.ndarray:
    i, j = grid.ij(ids)
    fine = grid.refined()
    kids = [fine.flat(2 * i + a, 2 * j + b) for a in (0, 1) for b in (0, 1)]
    return np.sort(np.concatenate(kids))


def _ancestors(base: Grid, fine: Grid, ids: np.ndarray) -> np.ndarray:
    factor = fine.nx // base.nx
    i, j = fine.ij(ids)
    return np.unique(base.flat(i // factor, j // factor))


@dataclass
class SubdivisionResult:
    cells: np.ndarray          # flat ids on the base grid
    base_grid: Grid
    fine_graph: BoxGraph       # graph at the finest level computed
    levels: list[int] = field(default_factory=list)   # surviving cell count per level


def subdivide_recurrent(f: MapHandle, window, h: float, eps: float, *,
                        W: PerturbationWindow | None = None, refine: int = 0,
                        depth: int | None = None,
                        cell_filter: CellFilter | None = None,
                        exact_only: bool = False) -> SubdivisionResult:
    """Recurrent cells at resolution ``h``, tightened by ``refine`` rounds of
    subdivision.

    Each round splits the surviving cells in four and rebuilds the graph on
    the children only; a true chain-recurrent point's chains stay inside
    recurrent cells, so discarding the rest keeps the outer approximation.
    With ``depth`` every level keeps only cells on cycles of at most
    ``depth`` edges (a point returning within ``depth`` steps yields such a
    cycle at every resolution).  The answer is reported on the base grid.
    """
    window = _as_box(window)
    base = Grid.over(window, h)
    if base.size > MAX_CELLS:
        raise TooManyCells(f"{base.nx} x {base.ny} cells exceeds the {MAX_CELLS} cap")
    grid = base
    ids = np.arange(base.size, dtype=np.int64)
    levels = []
    g = None
    for level in range(refine + 1):
        g = build_graph_on(f, grid, ids, 0.0 if exact_only else eps,
                           cell_filter=cell_filter, bp_window=W)
        if exact_only:
            g = g.exact_only()
        last = level == refine
        if depth is not None:
            mask = short_cycle_nodes(g.n, g.src, g.dst, depth)
        else:
            mask = recurrent_nodes(g.n, g.src, g.dst)
        ids = g.ids[mask]
        levels.append(len(ids))
        if last or len(ids) == 0:
            break
        ids = _children(grid, ids)
        grid = grid.refined()
        if len(ids) > MAX_CELLS:
            raise TooManyCells(f"refinement produced {len(ids)} cells")
    cells = _ancestors(base, grid, ids) if len(ids) else np.zeros(0, np.int64)
    return SubdivisionResult(cells=cells, base_grid=base, fine_graph=g, levels=levels)


def omega_candidate_cells(f: MapHandle, window, h: float, depth: int = DEFAULT_DEPTH, *,
                          refine: int = 0, cell_filter: CellFilter | None = None) -> np.ndarray:
    """Cells that may hold non-wandering points: cells on exact-edge cycles
    of length at most ``depth``, optionally refined by subdivision."""
    return subdivide_recurrent(f, window, h, 0.0, refine=refine, depth=depth,
                               cell_filter=cell_filter, exact_only=True).cells


def inclusion_check_prop33(f: MapHandle, window, h: float, eps: float, K: int = 32, *,
                           cell_filter: CellFilter | None = None) -> bool:
    """Graph-level check that non-wandering candidates are BP-chain recurrent
    with ``W`` the window dilated by ``eps``."""
    window = _as_box(window)
    g = build_box_graph(f, window, h, eps, cell_filter=cell_filter)
    ex = g.exact_only()
    omega = ex.ids[short_cycle_nodes(ex.n, ex.src, ex.dst, K)]
    W = PerturbationWindow((BoxR.from_bounds(window.lo.r - eps, window.lo.s - eps,
                                             window.hi.r + eps, window.hi.s + eps),))
    cr = chain_recurrent_cells(bp_filter(g, W))
    return bool(np.all(np.isin(omega, cr)))


def strip_filter(half_width: float) -> CellFilter:
    """Keep only cells whose interior misses the strip ``|s| < half_width``."""
    def keep(boxes: np.ndarray) -> np.ndarray:
        return (boxes[:, 1] >= half_width - 1e-12) | (boxes[:, 3] <= -half_width + 1e-12)
    return keep


def cell_indices(grid: Grid, ids: Iterable[int]) -> list[list[int]]:
    i, j = grid.ij(np.asarray(list(ids), dtype=np.int64))
    return [[int(a), int(b)] for a, b in zip(i, j)]
