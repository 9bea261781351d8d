"""Command-line front end.

Exit codes: 0 success, 1 a check or witness search came back negative,
2 a detector budget was exceeded, 3 parse or domain errors.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..chaindyn.chains import NoCycle, RealizationFailed, extract_witness_chain
from ..chaindyn.graph import (PerturbationWindow, TooManyCells, build_box_graph, cell_indices,
                              chain_recurrent_cells, subdivide_recurrent)
from ..chaindyn.report import RecurrenceReport
from ..example31 import BadParameter, NotCovered, leaf_geometry
from ..example34 import NoConvergence, OffDomain
from ..fixedpoint import BudgetExceeded, RefinementCapExceeded, locate_fixed_points
from ..geometry import BoxR, GeometryError, reflect_arr
from ..maps import DomainError, MapHandle
from .parser import ParseError, parse_map_spec
from .svg import PALETTE, SvgCanvas

COMMANDS = ("portrait", "cr", "crbp", "omega", "fix", "chain-witness", "verify")
EXIT_OK, EXIT_NEGATIVE, EXIT_BUDGET, EXIT_INPUT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CliConfig:
    command: str
    map_spec: str = "example31"
    window: tuple[float, float, float, float] = (-10.0, -10.0, 10.0, 10.0)
    h: float = 0.1
    eps: float = 0.1
    w_region: tuple[tuple[float, float, float, float], ...] = ()
    depth: int = 64
    tol: float = 1e-9
    out: str | None = None
    format: str = "json"
    leaves: tuple[float, ...] = ()
    start: tuple[float, float] | None = None
    refine: int = 0
    timing: bool = False
    checks: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        nums = [*self.window, self.h, self.eps, self.tol, *self.leaves,
                *(x for b in self.w_region for x in b), *(self.start or ())]
        if not all(math.isfinite(x) for x in nums):
            raise ConfigError("numeric flags must be finite")
        r0, s0, r1, s1 = self.window
        if not (r0 < r1 and s0 < s1):
            raise ConfigError("window must be r0,s0,r1,s1 with r0 < r1 and s0 < s1")
        for b in self.w_region:
            if not (b[0] <= b[2] and b[1] <= b[3]):
                raise ConfigError("each --w-region must be r0,s0,r1,s1 with r0 <= r1 and s0 <= s1")
        if self.h <= 0 or self.eps < 0 or self.tol <= 0 or self.depth < 1 or self.refine < 0:
            raise ConfigError("need h > 0, eps >= 0, tol > 0, depth >= 1, refine >= 0")
        if self.format not in ("json", "svg"):
            raise ConfigError("format must be json or svg")

    @property
    def box(self) -> BoxR:
        return BoxR.from_bounds(*self.window)

    @property
    def W(self) -> PerturbationWindow | None:
        if not self.w_region:
            return None
        return PerturbationWindow(tuple(BoxR.from_bounds(*b) for b in self.w_region))


# argument parsing -------------------------------------------------------------

class _ArgParser(argparse.ArgumentParser):
    def error(self, message):  # route usage errors to exit code 3
        raise ConfigError(message)


def _floats(n: int | None):
    def conv(text: str) -> tuple[float, ...]:
        try:
            vals = tuple(float(x) for x in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
        if n is not None and len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} numbers, got {len(vals)}")
        return vals
    return conv


def build_arg_parser() -> argparse.ArgumentParser:
    p = _ArgParser(prog="bpchain", description="Chain recurrence, BP-chain recurrence and fixed "
                                                "points of planar homeomorphisms.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--map", dest="map_spec", default="example31",
                   help="map spec, e.g. example31, rot:0,0,1.2566, comp(A;B)")
    p.add_argument("--window", type=_floats(4), default=(-10.0, -10.0, 10.0, 10.0),
                   help="r0,s0,r1,s1")
    p.add_argument("--h", type=float, default=0.1, help="cell side")
    p.add_argument("--eps", type=float, default=0.1, help="chain perturbation bound")
    p.add_argument("--w-region", dest="w_region", type=_floats(4), action="append", default=[],
                   help="box r0,s0,r1,s1 of the perturbation window W; repeat for a union")
    p.add_argument("--depth", type=int, default=64, help="cycle-length cap K for omega")
    p.add_argument("--tol", type=float, default=1e-9, help="fixed-point tolerance")
    p.add_argument("--out", default=None, help="output file (default: standard output)")
    p.add_argument("--format", choices=("json", "svg"), default="json")
    p.add_argument("--leaves", type=_floats(None), default=(),
                   help="leaf parameters for portrait (orbit seeds r for other maps)")
    p.add_argument("--start", type=_floats(2), default=None, help="chain-witness start point r,s")
    p.add_argument("--refine", type=int, default=0, help="subdivision rounds for cr/crbp/omega")
    p.add_argument("--timing", action="store_true",
                   help="record elapsed_ms (reports are then no longer byte-reproducible)")
    p.add_argument("--check", dest="checks", action="append", default=[],
                   help="verify: run only the named criterion (repeatable), e.g. AC-5")
    return p


_VALUE_FLAGS = ("--map", "--window", "--h", "--eps", "--w-region", "--depth", "--tol", "--out",
                "--format", "--leaves", "--start", "--refine", "--check")


def _glue(argv) -> list[str]:
    """Attach values to their flags so that ``--window -3,-3,3,3`` is not read
    as an option."""
    out, it = [], iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            val = next(it, None)
            out.append(tok if val is None else f"{tok}={val}")
        else:
            out.append(tok)
    return out


def config_from_args(argv) -> CliConfig:
    ns = build_arg_parser().parse_args(_glue(argv))
    return CliConfig(command=ns.command, map_spec=ns.map_spec, window=tuple(ns.window), h=ns.h,
                     eps=ns.eps, w_region=tuple(tuple(b) for b in ns.w_region), depth=ns.depth,
                     tol=ns.tol, out=ns.out, format=ns.format, leaves=tuple(ns.leaves),
                     start=None if ns.start is None else tuple(ns.start), refine=ns.refine,
                     timing=ns.timing, checks=tuple(ns.checks))


# portraits --------------------------------------------------------------------

def leaf31_polyline(t: float, reach: float, n: int = 400) -> np.ndarray:
    """Points along ``L_t``: in along ``J1``, round the arc, out along ``J2``."""
    g = leaf_geometry(t)
    far = max(reach, 1.05 * g.w1.r)
    r = np.geomspace(far, g.w1.r, n)
    j1 = np.stack([r, t / r], axis=-1)
    a0 = math.atan2(g.w1.s - g.center.s, g.w1.r - g.center.r)
    a = a0 + np.linspace(0.0, 2 * math.pi - 2 * a0, n)
    arc = np.stack([g.center.r + g.radius * np.cos(a), g.center.s + g.radius * np.sin(a)], axis=-1)
    return np.concatenate([j1, arc, reflect_arr(j1[::-1])])


def portrait_svg(f: MapHandle, cfg: CliConfig) -> str:
    win = cfg.box
    cv = SvgCanvas(win)
    reach = max(abs(win.lo.r), abs(win.hi.r), 1.0) * 1.2
    if f.label == "example31":
        for k, t in enumerate(cfg.leaves):
            g = leaf_geometry(t)
            col = PALETTE[k % len(PALETTE)]
            cv.polyline(leaf31_polyline(t, reach), col, f"L_t, t = {t:g}")
            cv.dot(g.w1.r, g.w1.s, col, f"w1 (t = {t:g})")
            cv.dot(g.v1.r, g.v1.s, col, f"v1 (t = {t:g})")
    elif f.label == "example34":
        for k, t in enumerate(cfg.leaves):
            a = np.linspace(0.0, 2 * math.pi, 721)
            R = math.hypot(t, 1.0)
            pts = np.stack([R * np.cos(a), t + R * np.sin(a)], axis=-1)
            cv.polyline(pts, PALETTE[k % len(PALETTE)], f"C_t, t = {t:g}")
        cv.dot(-1.0, 0.0, "#000000", "x")
        cv.dot(1.0, 0.0, "#000000", "y")
    else:
        for k, r in enumerate(cfg.leaves):
            z = np.array([[r, 0.0]])
            orb = [z[0]]
            for _ in range(400):
                z = f.forward_arr(z)
                if not np.all(np.isfinite(z)):
                    break
                orb.append(z[0])
            cv.polyline(np.array(orb), PALETTE[k % len(PALETTE)], f"orbit of ({r:g}, 0)")
    return cv.render(f"phase portrait of {f.label}")


def report_svg(f: MapHandle, rep: RecurrenceReport, grid_boxes: np.ndarray | None) -> str:
    cv = SvgCanvas(rep.window)
    if grid_boxes is not None and len(grid_boxes):
        cv.cells(grid_boxes, "#1f77b4", f"{rep.kind} cells")
    if rep.W is not None:
        for b in rep.W.regions:
            cv.cells(np.array([[b.lo.r, b.lo.s, b.hi.r, b.hi.s]]), "#2ca02c", "W")
    if rep.witness is not None:
        pts = rep.witness.as_array()
        cv.polyline(pts, "#d62728", "witness chain", kind="chain")
        for k in rep.witness.nonzero_steps():
            cv.dot(pts[k + 1][0], pts[k + 1][1], "#d62728", f"perturbed step {k + 1}")
    if rep.fix is not None:
        for p in rep.fix["fixed_points"]:
            cv.dot(p["location"][0], p["location"][1], "#000000", "fixed point")
    return cv.render(f"{rep.kind} report for {f.label}")


# commands ---------------------------------------------------------------------

def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _report(f, cfg, kind, cells=(), grid=None, witness=None, fix=None, t0=0.0) -> RecurrenceReport:
    idx = tuple(tuple(c) for c in cell_indices(grid, cells)) if grid is not None else ()
    elapsed = round(1000 * (time.perf_counter() - t0), 3) if cfg.timing else None
    return RecurrenceReport(label=f.label, window=cfg.box, resolution=cfg.h, eps=cfg.eps, kind=kind,
                            W=cfg.W, cells=idx, witness=witness, fix=fix, elapsed_ms=elapsed)


def _write_report(f, cfg, rep, boxes=None) -> None:
    _emit(report_svg(f, rep, boxes) if cfg.format == "svg" else rep.to_json() + "\n", cfg.out)


def run(cfg: CliConfig) -> int:
    if cfg.command == "verify":
        from ..acceptance import ALL, run_all
        unknown = [c for c in cfg.checks if c not in ALL]
        if unknown:
            raise ConfigError(f"unknown checks {unknown}; known: {sorted(ALL)}")
        results = run_all(list(cfg.checks) or None)
        text = "".join(r.line() + "\n" for r in results)
        _emit(text, cfg.out)
        return EXIT_OK if all(r.passed for r in results) else EXIT_NEGATIVE

    f = parse_map_spec(cfg.map_spec).build()
    t0 = time.perf_counter()
    if cfg.command == "portrait":
        _emit(portrait_svg(f, cfg), cfg.out)
        return EXIT_OK

    if cfg.command in ("cr", "crbp", "omega"):
        if cfg.command == "crbp" and cfg.W is None:
            raise ConfigError("crbp needs at least one --w-region")
        if cfg.command == "omega":
            res = subdivide_recurrent(f, cfg.box, cfg.h, 0.0, refine=cfg.refine, depth=cfg.depth,
                                      exact_only=True)
        else:
            W = cfg.W if cfg.command == "crbp" else None
            res = subdivide_recurrent(f, cfg.box, cfg.h, cfg.eps, W=W, refine=cfg.refine)
        rep = _report(f, cfg, cfg.command, res.cells, res.base_grid, t0=t0)
        _write_report(f, cfg, rep, res.base_grid.boxes(res.cells))
        return EXIT_OK

    if cfg.command == "fix":
        fr = locate_fixed_points(f, cfg.box, cfg.tol)
        rep = _report(f, cfg, "fix", fix=fr.to_tree(), t0=t0)
        _write_report(f, cfg, rep)
        return EXIT_OK

    # chain-witness
    if cfg.start is None:
        raise ConfigError("chain-witness needs --start r,s")
    W = cfg.W
    g = build_box_graph(f, cfg.box, cfg.h, cfg.eps, bp_window=W)
    kind = "crbp" if W is not None else "cr"
    try:
        chain = extract_witness_chain(g, f, cfg.start, W)
    except (NoCycle, RealizationFailed) as exc:
        print(f"bpchain: no witness: {exc}", file=sys.stderr)
        rep = _report(f, cfg, kind, chain_recurrent_cells(g), g.grid, t0=t0)
        _write_report(f, cfg, rep)
        return EXIT_NEGATIVE
    rep = _report(f, cfg, kind, witness=chain, t0=t0)
    _write_report(f, cfg, rep)
    return EXIT_OK


INPUT_ERRORS = (ParseError, ConfigError, DomainError, OffDomain, NotCovered, BadParameter,
                GeometryError, NoConvergence)
BUDGET_ERRORS = (BudgetExceeded, TooManyCells, RefinementCapExceeded)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except BUDGET_ERRORS as exc:
        print(f"bpchain: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except INPUT_ERRORS as exc:
        print(f"bpchain: {exc}", file=sys.stderr)
        return EXIT_INPUT
