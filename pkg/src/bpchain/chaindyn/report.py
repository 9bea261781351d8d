"""Immutable query reports and their deterministic JSON rendering."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

from ..geometry import BoxR
from .chains import EpsChain, ZERO_BAND
from .graph import PerturbationWindow

ENGINE_VERSION = "bpchain-0.1.0"
KINDS = ("cr", "crbp", "omega", "fix")

WINDOW_NOTE = ("window-relative result: only chains confined to the window are modelled; "
               "an empty cell set does not certify global absence")
BAND_NOTE = f"perturbations below {ZERO_BAND:g} are treated as zero"


@dataclass(frozen=True)
class RecurrenceReport:
    label: str
    window: BoxR
    resolution: float
    eps: float
    kind: str
    W: PerturbationWindow | None = None
    cells: tuple[tuple[int, int], ...] = ()
    witness: EpsChain | None = None
    fix: dict | None = None
    elapsed_ms: float | None = None
    notes: tuple[str, ...] = (WINDOW_NOTE, BAND_NOTE)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown report kind {self.kind!r}")

    def to_tree(self) -> dict[str, Any]:
        win = {"lo": [self.window.lo.r, self.window.lo.s], "hi": [self.window.hi.r, self.window.hi.s]}
        W = None
        if self.W is not None:
            W = [{"lo": [b.lo.r, b.lo.s], "hi": [b.hi.r, b.hi.s]} for b in self.W.regions]
        wit = None
        if self.witness is not None:
            wit = {"points": [[p.r, p.s] for p in self.witness.points],
                   "perturbations": list(self.witness.perturbations),
                   "in_W": [st.in_W for st in self.witness.steps]}
        tree: dict[str, Any] = {
            "map": self.label, "window": win, "h": self.resolution, "eps": self.eps,
            "kind": self.kind, "W": W, "cells": [list(c) for c in self.cells],
            "witness": wit,
        }
        if self.fix is not None:
            tree["fix"] = self.fix
        tree["elapsed_ms"] = self.elapsed_ms
        tree["engine_version"] = ENGINE_VERSION
        tree["notes"] = list(self.notes)
        return tree

    def to_json(self) -> str:
        return render_json(self.to_tree())


def _num(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot render non-finite number {x!r}")
    s = format(float(x), ".17g")
    if "." not in s and "e" not in s and "inf" not in s:
        s += ".0"
    return s


def render_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with insertion-ordered keys and floats at 17 significant
    digits, so equal inputs give byte-identical output."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {render_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj) and len(obj) <= 4:
            return "[" + ", ".join(render_json(v) for v in obj) + "]"
        items = [pad + render_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return render_json(obj.item(), indent, _level)
    raise TypeError(f"cannot render {type(obj).__name__}")
