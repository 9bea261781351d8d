"""Minimal SVG 1.1 writer for phase portraits, cell sets and chains.

World coordinates are kept: the ``viewBox`` is the window with the y-axis
flipped by a group transform, and stroke widths are 0.2% of the window width.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from ..geometry import BoxR

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(x: float) -> str:
    return format(float(x), ".10g")


class SvgCanvas:
    def __init__(self, window: BoxR) -> None:
        self.window = window
        self.stroke = 0.002 * window.width
        self.items: list[str] = []

    def polyline(self, pts: np.ndarray, color: str, label: str | None = None, closed: bool = False,
                 dashed: bool = False, kind: str = "leaf") -> None:
        """One ``path`` element; NaN rows split the path into pieces."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        parts, pen = [], False
        for r, s in pts:
            if not (np.isfinite(r) and np.isfinite(s)):
                pen = False
                continue
            parts.append(f"{'L' if pen else 'M'}{_f(r)} {_f(s)}")
            pen = True
        if closed and parts:
            parts.append("Z")
        extra = f' stroke-dasharray="{_f(4 * self.stroke)} {_f(2 * self.stroke)}"' if dashed else ""
        self.items.append(f'<path class="{kind}" d="{" ".join(parts)}" fill="none" stroke="{color}" '
                          f'stroke-width="{_f(self.stroke)}"{extra}>{_title(label)}</path>')

    def cells(self, boxes: np.ndarray, color: str, label: str | None = None) -> None:
        """A set of boxes as one filled ``path``."""
        parts = [f"M{_f(a)} {_f(b)}H{_f(c)}V{_f(d)}H{_f(a)}Z" for a, b, c, d in np.asarray(boxes)]
        self.items.append(f'<path class="cells" d="{"".join(parts)}" fill="{color}" '
                          f'fill-opacity="0.5" stroke="none">{_title(label)}</path>')

    def dot(self, r: float, s: float, color: str, label: str | None = None) -> None:
        self.items.append(f'<circle cx="{_f(r)}" cy="{_f(s)}" r="{_f(3 * self.stroke)}" '
                          f'fill="{color}">{_title(label)}</circle>')

    def render(self, title: str = "") -> str:
        w = self.window
        vb = f"{_f(w.lo.r)} {_f(-w.hi.s)} {_f(w.width)} {_f(w.height)}"
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="{vb}">\n')
        if title:
            head += f"<desc>{escape(title)}</desc>\n"
        axes = (f'<path class="axes" d="M{_f(w.lo.r)} 0H{_f(w.hi.r)}M0 {_f(w.lo.s)}V{_f(w.hi.s)}" '
                f'stroke="#bbbbbb" stroke-width="{_f(self.stroke / 2)}" fill="none"/>')
        body = "\n".join(self.items)
        return (head + '<g transform="scale(1,-1)">\n' + axes + "\n" + body + "\n</g>\n</svg>\n")


def _title(label: str | None) -> str:
    return f"<title>{escape(label)}</title>" if label else ""
