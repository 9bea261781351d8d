"""Acceptance checks AC-1 .. AC-9, shared by the test-suite and ``verify``.

Every check returns an :class:`ACResult`; none raises on a failed
criterion.  Randomised checks use fixed seeds.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chaindyn.chains import adaptive_witness_search, extract_witness_chain, validate_chain
from .chaindyn.graph import (PerturbationWindow, bp_filter, build_box_graph, chain_recurrent_cells,
                             inclusion_check_prop33, omega_candidate_cells, recurrent_nodes,
                             strip_filter, subdivide_recurrent)
from .example31 import example31_handle, leaf_geometry, leaf_param_arr
from .example34 import example34_handle
from .fixedpoint import (ImplicationParams, LoopPath, VanishingOnLoop, check_implication,
                         displacement_winding, locate_fixed_points)
from .geometry import BoxR, reflect_arr
from .maps import MapHandle, compose, rotation, sampled_jacobian_det, scaling, translation

SEED = 20240531


@dataclass(frozen=True)
class ACResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.seconds:.1f} s) {self.detail}"


def _timed(name: str, fn: Callable[[], tuple[bool, str]], budget: float | None = None) -> ACResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    if budget is not None and dt > budget:
        ok = False
        detail += f"; runtime {dt:.1f} s over the {budget:g} s budget"
    return ACResult(name, bool(ok), detail, dt)


# AC-1 -------------------------------------------------------------------------

def ac1() -> ACResult:
    def run():
        f = example31_handle()
        rep = locate_fixed_points(f, (-20, -20, 20, 20), 1e-6)
        u = np.linspace(-20.0, 20.0, 1000)
        z = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2)
        d = np.hypot(*(f.forward_arr(z) - z).T)
        k = int(np.argmin(d))
        ok = not rep.fixed_points and d[k] > 0.01
        return ok, (f"fixed points found: {len(rep.fixed_points)}; grid minimum of d(f(z), z) = "
                    f"{d[k]:.6g} at ({z[k, 0]:.5g}, {z[k, 1]:.5g}) (floor 0.01)")
    return _timed("AC-1", run, 60)


# AC-2 -------------------------------------------------------------------------

def ac2() -> ACResult:
    def run():
        f = example31_handle()
        res = adaptive_witness_search(f, (2.0, 0.5), 0.5, require_jump=True)
        if res.chain is None:
            return False, f"no chain; attempts {[o for _, o in res.tried]}"
        v = validate_chain(f, res.chain)
        ok = v.valid_eps and bool(res.chain.nonzero_steps()) and v.mismatches == 0
        return ok, (f"window half-width {res.window.hi.r:g}; {res.chain.n} steps, "
                    f"{len(res.chain.nonzero_steps())} nonzero perturbations, "
                    f"max {v.max_perturbation:.4g}; valid_eps={v.valid_eps}")
    return _timed("AC-2", run, 120)


# AC-3 -------------------------------------------------------------------------

def ac3() -> ACResult:
    def run():
        f = example31_handle()
        W = PerturbationWindow.box(-10, -10, 10, 10)
        g = build_box_graph(f, (-40, -40, 40, 40), 0.1, 0.1)
        cells = chain_recurrent_cells(bp_filter(g, W))
        return len(cells) == 0, f"{len(cells)} BP-recurrent cells of {g.n}"
    return _timed("AC-3", run, 300)


# AC-4 -------------------------------------------------------------------------

def ac4() -> ACResult:
    def run():
        f = example34_handle()
        keep = strip_filter(0.05)
        coarse = omega_candidate_cells(f, (-3, -3, 3, 3), 0.02, 64, cell_filter=keep)
        cells = omega_candidate_cells(f, (-3, -3, 3, 3), 0.02, 64, refine=1, cell_filter=keep)
        return len(cells) == 0, (f"{len(cells)} candidate cells after one subdivision round "
                                 f"({len(coarse)} before)")
    return _timed("AC-4", run, 300)


# AC-5 -------------------------------------------------------------------------

AC5_W = PerturbationWindow((BoxR.from_bounds(-1.5, -0.5, -0.5, 0.5),
                            BoxR.from_bounds(0.5, -0.5, 1.5, 0.5)))


def ac5_chain():
    f = example34_handle()
    g = build_box_graph(f, (-3, -3, 3, 3), 0.025, 0.1, bp_window=AC5_W)
    return f, extract_witness_chain(g, f, (0.0, 1.0), AC5_W)


def ac5() -> ACResult:
    def run():
        f, chain = ac5_chain()
        v = validate_chain(f, chain, AC5_W)
        jumps = chain.nonzero_steps()
        in_w = all(chain.steps[k].in_W for k in jumps)
        return v.valid_bp and in_w, (f"{chain.n} steps, {len(jumps)} nonzero perturbations all in W: "
                                     f"{in_w}; valid_bp={v.valid_bp}; max {v.max_perturbation:.4g}")
    return _timed("AC-5", run, 60)


# AC-6 -------------------------------------------------------------------------

def ac6() -> ACResult:
    def run():
        fixtures = [
            ("example34", example34_handle(), (-3, -3, 3, 3), strip_filter(0.05)),
            ("rot 2pi/5", rotation(0, 0, 2 * math.pi / 5), (-2, -2, 2, 2), None),
            ("rot pi", rotation(0, 0, math.pi), (-2, -2, 2, 2), None),
            ("trans 1,0", translation(1, 0), (-2, -2, 2, 2), None),
            ("example31", example31_handle(), (-4, -4, 4, 4), None),
        ]
        out = {name: inclusion_check_prop33(f, win, 0.05, 0.2, 32, cell_filter=flt)
               for name, f, win, flt in fixtures}
        return all(out.values()), ", ".join(f"{k}={v}" for k, v in out.items())
    return _timed("AC-6", run)


# AC-7 -------------------------------------------------------------------------

def ac7() -> ACResult:
    def run():
        cases = [
            ("rot(3,4,2pi/5) periodic", rotation(3, 4, 2 * math.pi / 5), (0, 0, 8, 8), "periodic",
             ImplicationParams(max_period=5), (3.0, 4.0)),
            ("rot(3,4,2pi/5) bp", rotation(3, 4, 2 * math.pi / 5), (0, 0, 8, 8), "bp_chain_recurrent",
             ImplicationParams(h=0.1, eps=0.2), (3.0, 4.0)),
            ("rot(0,0,pi) periodic", rotation(0, 0, math.pi), (-2, -2, 2, 2), "periodic",
             ImplicationParams(max_period=2), (0.0, 0.0)),
            ("rot(2pi/3) o contraction", compose(rotation(0, 0, 2 * math.pi / 3), scaling(0, 0, 0.95)),
             (-2, -2, 2, 2), "periodic", ImplicationParams(max_period=3), None),
        ]
        ok = True
        notes = []
        for name, f, win, hyp, params, centre in cases:
            res = check_implication(f, hyp, win, params)
            good = True
            if res.hypothesis_found:
                fps = res.fix_report.fixed_points
                good = bool(fps) and min(p.residual for p in fps) < 1e-8
                if centre is not None and fps:
                    err = min(math.hypot(p.location.r - centre[0], p.location.s - centre[1]) for p in fps)
                    good &= err < 1e-9
            ok &= good
            notes.append(f"{name}: ({res.hypothesis_found}, {res.fixed_point_found})")
        return ok, "; ".join(notes)
    return _timed("AC-7", run)


# AC-8 -------------------------------------------------------------------------

def _leaf_samples(rng, t: float, n: int, part: str) -> np.ndarray:
    """Random points on the ``J1`` branch or the ``A1 u A0`` arc of ``L_t``."""
    g = leaf_geometry(t)
    if part == "J1":
        r = g.w1.r + rng.uniform(0.0, 10.0, n) * max(1.0, g.w1.r)
        return np.stack([r, t / r], axis=-1)
    a0 = math.atan2(g.w1.s - g.center.s, g.w1.r - g.center.r)
    a1 = math.atan2(g.v2.s - g.center.s, g.v2.r - g.center.r)
    span = (a1 - a0) % (2 * math.pi)
    a = a0 + rng.uniform(0.0, 1.0, n) * span
    return np.stack([g.center.r + g.radius * np.cos(a), g.center.s + g.radius * np.sin(a)], axis=-1)


T_SET = (0.25, 0.5, 1.0, 2.0, 4.0, 16.0)


def map_suite(seed: int = SEED) -> dict[str, tuple[bool, float]]:
    """Invariants of both example maps; name -> (passed, worst value)."""
    rng = np.random.default_rng(seed)
    f31, f34 = example31_handle(), example34_handle()
    out: dict[str, tuple[bool, float]] = {}

    z = rng.uniform(-50, 50, (10_000, 2))
    e = float(np.max(np.hypot(*(f31.backward_arr(f31.forward_arr(z)) - z).T)))
    e2 = float(np.max(np.hypot(*(f31.forward_arr(f31.backward_arr(z)) - z).T)))
    out["31 round trip"] = (max(e, e2) < 1e-9, max(e, e2))
    t0, _ = leaf_param_arr(z)
    t1, _ = leaf_param_arr(f31.forward_arr(z))
    e = float(np.max(np.abs(t1 - t0)))
    out["31 leaf invariance"] = (e < 1e-7, e)

    worst_b = worst_d = worst_c = 0.0
    for t in T_SET:
        j = _leaf_samples(rng, t, 1000 // len(T_SET) + 1, "J1")
        fj = f31.forward_arr(j)
        worst_b = max(worst_b, float(np.max(np.abs((j[:, 0] - fj[:, 0]) - j[:, 1] / 2))))
        a = _leaf_samples(rng, t, 1000 // len(T_SET) + 1, "A")
        chord = leaf_geometry(t).chord
        worst_d = max(worst_d, float(np.max(np.abs(np.hypot(*(f31.forward_arr(a) - a).T) - chord))))
        for pts in (reflect_arr(j), reflect_arr(a)):
            rhs = reflect_arr(f31.backward_arr(reflect_arr(pts)))
            worst_c = max(worst_c, float(np.max(np.hypot(*(f31.forward_arr(pts) - rhs).T))))
    out["31 branch step"] = (worst_b < 1e-9, worst_b)
    out["31 arc chord"] = (worst_d < 1e-7, worst_d)
    out["31 reflection symmetry"] = (worst_c < 1e-8, worst_c)

    z = rng.uniform(-10, 10, (10_000, 2))
    det = sampled_jacobian_det(f31, z, 1e-6)
    near = _near_junction(z)
    m = float(np.min(det[~near]))
    out["31 jacobian"] = (m > 0, m)

    s = rng.uniform(1e-3, 5, 10_000) * rng.choice([-1.0, 1.0], 10_000)
    z = np.stack([rng.uniform(-5, 5, 10_000), s], axis=-1)
    fz = f34.forward_arr(z)
    e = float(np.max(np.hypot(*(f34.backward_arr(fz) - z).T)))
    out["34 round trip"] = (e < 1e-9, e)
    tp = lambda w: (w[:, 0] ** 2 + w[:, 1] ** 2 - 1.0) / (2.0 * w[:, 1])
    e = float(np.max(np.abs(tp(fz) - tp(z))))
    out["34 pencil invariance"] = (e < 1e-8, e)
    out["34 arc invariance"] = (bool(np.all(np.sign(fz[:, 1]) == np.sign(z[:, 1]))), 0.0)
    anchor = np.minimum(np.hypot(z[:, 0] + 1.0, z[:, 1]), np.hypot(z[:, 0] - 1.0, z[:, 1]))
    e = float(np.max(np.abs(np.hypot(*(fz - z).T) - anchor / 2)))
    out["34 step law"] = (e < 1e-9, e)
    det = sampled_jacobian_det(f34, z, 1e-7)
    out["34 jacobian"] = (float(det.min()) > 0, float(det.min()))
    out["34 monotone approach"] = _monotone_approach(f34, rng)
    return out


def _near_junction(z: np.ndarray, radius: float = 1e-4) -> np.ndarray:
    """Points within ``radius`` of a segment junction of their leaf (or where
    the finite-difference stencil crosses one)."""
    _, seg = leaf_param_arr(z)
    near = np.zeros(len(z), bool)
    for dz in ((radius, 0), (-radius, 0), (0, radius), (0, -radius)):
        _, s2 = leaf_param_arr(z + np.array(dz))
        near |= s2 != seg
    return near


def _monotone_approach(f: MapHandle, rng) -> tuple[bool, float]:
    """Along upper arcs the arc-length distance to ``x`` strictly decreases
    (lower arcs: to ``y``) for up to 50 steps or until the orbit leaves the
    computable domain.  The Euclidean distance is checked as well on
    circles where that arc is at most a half circle."""
    z = np.stack([rng.uniform(-3, 3, 100), rng.uniform(0.05, 3, 100) * rng.choice([-1.0, 1.0], 100)],
                 axis=-1)
    ok = True
    worst = math.inf
    for z0 in z:
        up = z0[1] > 0
        t = (z0 @ z0 - 1.0) / (2.0 * z0[1])
        R = math.hypot(t, 1.0)
        orb = [z0]
        for _ in range(50):
            nxt = f.forward_arr(orb[-1][None])[0]
            if not np.all(np.isfinite(nxt)):
                break   # the orbit has crept within s_min of the removed axis
            orb.append(nxt)
        orb = np.array(orb)
        # angles about (0, t): the upper arc is (alpha, pi - alpha), the lower
        # arc (pi - alpha, alpha + 2 pi)
        alpha = math.atan2(-t, 1.0)
        theta = alpha + np.mod(np.arctan2(orb[:, 1] - t, orb[:, 0]) - alpha, 2 * np.pi)
        dist = R * ((math.pi - alpha) - theta if up else (alpha + 2 * math.pi) - theta)
        step = np.diff(dist)
        ok &= bool(np.all(dist > 0) and np.all(step < 0))
        worst = min(worst, float(-step.max()))
        if (t <= 0) if up else (t >= 0):
            a = np.array([-1.0, 0.0]) if up else np.array([1.0, 0.0])
            ok &= bool(np.all(np.diff(np.hypot(*(orb - a).T)) < 0))
    return ok, worst


def ac8() -> ACResult:
    def run():
        res = map_suite()
        bad = [k for k, (ok, _) in res.items() if not ok]
        detail = ", ".join(f"{k} {v:.2g}" for k, (_, v) in res.items())
        return not bad, (f"failed: {bad}; " if bad else "") + detail
    return _timed("AC-8", run, 120)


# AC-9 -------------------------------------------------------------------------

def _brute_cycle_nodes(n: int, edges: set[tuple[int, int]]) -> np.ndarray:
    reach = np.zeros((n, n), bool)
    for a, b in edges:
        reach[a, b] = True
    for k in range(n):
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    return np.diag(reach).copy()


def random_affine(rng) -> MapHandle:
    A = rng.normal(size=(2, 2))
    if np.linalg.det(A) < 0:
        A[:, 0] *= -1
    b = rng.normal(size=2)
    Ai = np.linalg.inv(A)
    return MapHandle(label="affine", forward=lambda z: z @ A.T + b,
                     backward=lambda z: (z - b) @ Ai.T, lipschitz=float(np.linalg.norm(A, 2)))


def winding_checks(count: int = 100, seed: int = SEED) -> tuple[int, int, int]:
    """(maps tried, additivity failures, refinement failures)."""
    rng = np.random.default_rng(seed)
    tried = add_bad = ref_bad = 0
    while tried < count:
        f = random_affine(rng)
        c = rng.uniform(-1, 1, 2)
        w = rng.uniform(0.5, 2.0)
        box = (c[0] - w, c[1] - w, c[0] + w, c[1] + w)
        kids = [(box[0], box[1], c[0], c[1]), (c[0], box[1], box[2], c[1]),
                (box[0], c[1], c[0], box[3]), (c[0], c[1], box[2], box[3])]
        try:
            parent = displacement_winding(f, LoopPath.square(box))
            parts = [displacement_winding(f, LoopPath.square(k)) for k in kids]
            loop = LoopPath.square(box)
            fine = displacement_winding(f, loop.refined(2))
        except VanishingOnLoop:
            continue
        tried += 1
        add_bad += parent != sum(parts)
        ref_bad += parent != fine
    return tried, add_bad, ref_bad


def scc_checks(count: int = 200, seed: int = SEED) -> int:
    """Number of random graphs where the SCC engine disagrees with brute force."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(count):
        n = int(rng.integers(1, 13))
        p = rng.uniform(0.05, 0.4)
        edges = {(a, b) for a, b in itertools.product(range(n), repeat=2) if rng.random() < p}
        src = np.array([a for a, _ in edges], dtype=np.int64)
        dst = np.array([b for _, b in edges], dtype=np.int64)
        bad += not np.array_equal(recurrent_nodes(n, src, dst), _brute_cycle_nodes(n, edges))
    return bad


def ac9() -> ACResult:
    def run():
        bad = scc_checks()
        tried, add_bad, ref_bad = winding_checks()
        ok = bad == 0 and add_bad == 0 and ref_bad == 0
        return ok, (f"SCC mismatches {bad}/200; winding additivity failures {add_bad}/{tried}, "
                    f"refinement failures {ref_bad}/{tried}")
    return _timed("AC-9", run)


ALL = {"AC-1": ac1, "AC-2": ac2, "AC-3": ac3, "AC-4": ac4, "AC-5": ac5, "AC-6": ac6,
       "AC-7": ac7, "AC-8": ac8, "AC-9": ac9}


def run_all(names=None) -> list[ACResult]:
    return [ALL[k]() for k in (names or ALL)]
