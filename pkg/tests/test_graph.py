import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bpchain.chaindyn import (Grid, PerturbationWindow, TooManyCells, bp_filter, build_box_graph,
                              chain_recurrent_cells, enclose, inclusion_check_prop33,
                              omega_candidate_cells, recurrent_nodes, short_cycle_nodes, strip_filter)
from bpchain.example31 import example31_handle
from bpchain.example34 import example34_handle
from bpchain.geometry import BoxR
from bpchain.maps import identity, rotation, scaling, translation


def cycle_nodes_brute(n, edges, max_len=None):
    """Nodes through which some closed walk of at most ``max_len`` edges
    passes, by powers of the boolean adjacency matrix."""
    A = np.zeros((n, n), dtype=bool)
    for a, b in edges:
        A[a, b] = True
    reach = A.copy()
    P = A.copy()
    for _ in range((max_len or n) - 1):
        P = (P.astype(int) @ A.astype(int)) > 0
        reach |= P
    return np.diag(reach).copy()


# construction ------------------------------------------------------------------

def test_translation_leaves_window():
    g = build_box_graph(translation(10, 0), (0, 0, 1, 1), 0.5, 0.1)
    assert g.n == 4 and g.n_edges == 0


def test_identity_like_rotation_has_self_loops():
    g = build_box_graph(rotation(0.5, 0.5, 0.0), (0, 0, 1, 1), 0.5, 0.0)
    loops = {(a, b) for a, b in g.edge_set("exact") if a == b}
    assert len(loops) == 4 and not g.perturbed.any()


def test_quarter_turn_quadrants():
    """Padding by the Lipschitz constant times half a diagonal makes every
    enclosure cover the whole window at h = 1, so the 4-cycle sits inside a
    single strongly connected component of the four quadrant cells."""
    g = build_box_graph(rotation(0, 0, math.pi / 2), (-1, -1, 1, 1), 1.0, 0.0)
    assert g.n == 4
    grid = g.grid
    q = {name: int(grid.locate(np.array([p]))[0]) for name, p in
         {"I": (0.5, 0.5), "II": (-0.5, 0.5), "III": (-0.5, -0.5), "IV": (0.5, -0.5)}.items()}
    cycle = {(q["I"], q["II"]), (q["II"], q["III"]), (q["III"], q["IV"]), (q["IV"], q["I"])}
    assert cycle <= g.edge_set("exact")
    assert set(chain_recurrent_cells(g).tolist()) == set(q.values())


def test_too_many_cells():
    with pytest.raises(TooManyCells):
        build_box_graph(translation(1, 0), (0, 0, 100, 100), 0.01, 0.1)


def test_edge_kinds_match_enclosures(rng):
    f = example31_handle()
    g = build_box_graph(f, (-3, -3, 3, 3), 0.25, 0.3)
    cells = g.cells()
    for k in rng.choice(g.n_edges, 200, replace=False):
        e = g.enclosures[g.src[k]]
        b = cells[g.dst[k]]
        gap = np.hypot(max(0, b[0] - e[2], e[0] - b[2]), max(0, b[1] - e[3], e[1] - b[3]))
        if g.perturbed[k]:
            assert gap > 0 and max(0, b[0] - e[2], e[0] - b[2], b[1] - e[3], e[1] - b[3]) <= g.eps + 1e-12
        else:
            assert gap == 0


@pytest.mark.parametrize("f, window", [(example31_handle(), (-5, -5, 5, 5)),
                                       (example34_handle(), (-3, -3, 3, 3))], ids=["ex31", "ex34"])
def test_enclosure_soundness(f, window, rng):
    g = build_box_graph(f, window, 0.25, 0.0)
    cells = g.cells()
    for k in rng.choice(g.n, 40, replace=False):
        b = cells[k]
        z = rng.uniform(b[:2], b[2:], (100, 2))
        z = z[f.domain_contains(z)]
        fz = f.forward_arr(z)
        e = g.enclosures[k]
        assert np.all((fz >= e[:2]) & (fz <= e[2:]))


def test_example34_excludes_axis_cells():
    g = build_box_graph(example34_handle(), (-1, -1, 1, 1), 0.25, 0.1)
    cells = g.cells()
    assert np.all((cells[:, 1] >= 0) | (cells[:, 3] <= 0))
    assert len(g.excluded) == 0  # the axis lies on cell boundaries here
    g = build_box_graph(example34_handle(), (-1, -0.9, 1, 1.1), 0.25, 0.1)
    assert len(g.excluded) == 8


# chain recurrence ------------------------------------------------------------

def test_cr_translation_is_empty():
    g = build_box_graph(translation(1, 0), (-2, -2, 2, 2), 0.25, 0.1)
    assert len(chain_recurrent_cells(g)) == 0


def test_cr_identity_is_everything():
    g = build_box_graph(identity(), (0, 0, 1, 1), 0.25, 0.0)
    assert len(chain_recurrent_cells(g)) == 16


@given(st.integers(1, 12), st.floats(0.05, 0.5), st.integers(0, 2 ** 32 - 1))
def test_scc_matches_brute_force(n, density, seed):
    r = np.random.default_rng(seed)
    edges = [(a, b) for a in range(n) for b in range(n) if r.random() < density]
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    want = cycle_nodes_brute(n, edges)
    assert recurrent_nodes(n, src, dst).tolist() == want.tolist()
    for K in (1, 2, 3, 5):
        assert short_cycle_nodes(n, src, dst, K).tolist() == cycle_nodes_brute(n, edges, K).tolist()


def test_cr_monotone_in_eps():
    f = scaling(0.3, -0.2, 0.9)
    prev = set()
    for eps in (0.0, 0.05, 0.1, 0.2, 0.4):
        cur = set(chain_recurrent_cells(build_box_graph(f, (-2, -2, 2, 2), 0.1, eps)).tolist())
        assert prev <= cur
        prev = cur


def test_bp_filter_examples():
    f = example31_handle()
    g = build_box_graph(f, (-3, -3, 3, 3), 0.2, 0.2)
    big = bp_filter(g, PerturbationWindow.box(-100, -100, 100, 100))
    assert big.edge_set() == g.edge_set()
    far = bp_filter(g, PerturbationWindow.box(1000, 1000, 1000, 1000))
    assert far.edge_set() == g.edge_set("exact")


def test_bp_filter_audit_example34(rng):
    f = example34_handle()
    W = PerturbationWindow((BoxR.from_bounds(-1.5, -0.5, -0.5, 0.5), BoxR.from_bounds(0.5, -0.5, 1.5, 0.5)))
    g = build_box_graph(f, (-3, -3, 3, 3), 0.1, 0.1)
    fg = bp_filter(g, W)
    kept = fg.edge_set("perturbed")
    all_p = np.flatnonzero(g.perturbed)
    removed = [k for k in all_p if (g.ids[g.src[k]], g.ids[g.dst[k]]) not in kept]
    assert kept and removed
    wb = W.bounds_array()

    def meets(e):
        return any(e[0] <= w[2] + g.eps and e[2] >= w[0] - g.eps and e[1] <= w[3] + g.eps
                   and e[3] >= w[1] - g.eps for w in wb)

    for k in rng.choice(removed, 20, replace=False):
        assert not meets(g.enclosures[g.src[k]])
    kept_idx = [k for k in all_p if (g.ids[g.src[k]], g.ids[g.dst[k]]) in kept]
    for k in rng.choice(kept_idx, 20, replace=False):
        assert meets(g.enclosures[g.src[k]])


def test_edge_inclusions_and_monotone_in_W():
    f = example31_handle()
    g = build_box_graph(f, (-4, -4, 4, 4), 0.1, 0.2)
    prev = set()
    for a in (0.5, 1.0, 2.0, 3.0):
        fg = bp_filter(g, PerturbationWindow.box(-a, -a, a, a))
        assert g.edge_set("exact") <= fg.edge_set() <= g.edge_set()
        cur = set(chain_recurrent_cells(fg).tolist())
        assert prev <= cur
        prev = cur


def test_bp_window_during_build_matches_filter():
    f = example34_handle()
    W = PerturbationWindow.box(-1.5, -0.5, -0.5, 0.5)
    g = build_box_graph(f, (-2, -2, 2, 2), 0.1, 0.1)
    assert build_box_graph(f, (-2, -2, 2, 2), 0.1, 0.1, bp_window=W).edge_set() == bp_filter(g, W).edge_set()


def test_soundness_on_concrete_chains(rng):
    """Cells of points with an explicit eps-chain back to themselves inside
    the window are reported recurrent at any h <= eps/4."""
    cases = [
        # periodic orbits: zero-perturbation chains
        (rotation(0, 0, 2 * math.pi / 5), 0.2, 1.5),
        (rotation(0.2, -0.1, math.pi), 0.1, 1.5),
        # each step of length 0.1 can be undone by a perturbation of 0.1
        (translation(0.1, 0), 0.3, 1.5),
    ]
    checked = 0
    for f, eps, rad in cases:
        for h in (eps / 4, eps / 8):
            g = build_box_graph(f, (-2, -2, 2, 2), h, eps)
            rec = set(chain_recurrent_cells(g).tolist())
            z = rng.uniform(-rad, rad, (250, 2))
            z = z[np.hypot(*z.T) < rad]
            ids = g.grid.locate(z)
            assert all(int(i) in rec for i in ids)
            checked += len(z)
    assert checked > 1000


# non-wandering candidates ------------------------------------------------------

def test_omega_rotation_nonempty():
    f = rotation(0, 0, 2 * math.pi / 5)
    cells = omega_candidate_cells(f, (-2, -2, 2, 2), 0.1, 8)
    assert len(cells) > 0
    grid = Grid.over(BoxR.from_bounds(-2, -2, 2, 2), 0.1)
    z = np.array([[math.cos(a), math.sin(a)] for a in np.linspace(0, 2 * math.pi, 50)])
    assert set(grid.locate(z).tolist()) <= set(cells.tolist())


def test_omega_translation_empty():
    assert len(omega_candidate_cells(translation(1, 0), (-2, -2, 2, 2), 0.1, 8)) == 0


def test_omega_example31_coarse_grid():
    """At h = 0.1 the box graph cannot separate example31's orbits: the
    enclosures overlap enough to close short cycles, so the candidate set is
    not empty at this resolution."""
    cells = omega_candidate_cells(example31_handle(), (-20, -20, 20, 20), 0.1, 64)
    assert len(cells) > 0


def test_omega_example34_refined_empty():
    cells = omega_candidate_cells(example34_handle(), (-3, -3, 3, 3), 0.02, 64, refine=1,
                                  cell_filter=strip_filter(0.05))
    assert len(cells) == 0


# inclusion check ---------------------------------------------------------------

@pytest.mark.parametrize("f, window, filt", [
    (rotation(0, 0, 2 * math.pi / 5), (-2, -2, 2, 2), None),
    (translation(1, 0), (-2, -2, 2, 2), None),
    (example34_handle(), (-3, -3, 3, 3), strip_filter(0.05)),
], ids=["rot5", "trans", "ex34"])
def test_inclusion_check(f, window, filt):
    assert inclusion_check_prop33(f, window, 0.05, 0.2, 32, cell_filter=filt)


def test_grid_locate_round_trip(rng):
    grid = Grid.over(BoxR.from_bounds(-1, -2, 3, 2), 0.25)
    ids = rng.integers(0, grid.size, 100)
    centres = grid.boxes(ids).reshape(-1, 2, 2).mean(axis=1)
    assert np.array_equal(grid.locate(centres), ids)
