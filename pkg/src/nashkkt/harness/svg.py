"""Standalone SVG plots of planar (or projected) multi-agent trajectories."""

from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_svg(paths: Sequence[np.ndarray], path: Optional[str] = None, circles=(), active=(),
             scale: float = 20.0, margin: float = 30.0, title: str = "") -> str:
    """Render agent paths with optional avoid-set circles and active-constraint markers.

    Parameters
    ----------
    paths : sequence of (T, d) arrays
        Agent positions; only the first two coordinates are drawn.
    path : str, optional
        Output file; the SVG text is returned either way.
    circles : iterable of (x, y, radius)
        Avoid-set outlines in world units.
    active : iterable of (x, y)
        Points drawn as square markers (active constraints).
    scale : float
        Pixels per world unit.
    """
    pts = [np.asarray(p, float)[:, :2] for p in paths]
    extra = [np.array([[x - r, y - r], [x + r, y + r]]) for x, y, r in circles]
    extra += [np.array([[x, y]]) for x, y in active]
    allp = np.concatenate(pts + extra) if pts or extra else np.zeros((1, 2))
    lo, hi = allp.min(0), allp.max(0)
    w = (hi[0] - lo[0]) * scale + 2 * margin
    h = (hi[1] - lo[1]) * scale + 2 * margin

    def tx(p):
        return margin + (p[0] - lo[0]) * scale, h - margin - (p[1] - lo[1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2f}" height="{h:.2f}" '
           f'viewBox="0 0 {w:.2f} {h:.2f}">']
    if title:
        out.append(f"<title>{_escape(title)}</title>")
    x0, y0 = tx(lo)
    x1, y1 = tx(hi)
    out.append(f'<g class="axes" stroke="#999" stroke-width="1">'
               f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}"/>'
               f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}"/></g>')
    for x, y, r in circles:
        cx, cy = tx((x, y))
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r * scale:.6g}" fill="none" '
                   f'stroke="#555" stroke-dasharray="4 3"/>')
    for k, p in enumerate(pts):
        coords = " ".join("{:.2f},{:.2f}".format(*tx(q)) for q in p)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{COLORS[k % len(COLORS)]}" '
                   f'stroke-width="2"/>')
    for x, y in active:
        cx, cy = tx((x, y))
        out.append(f'<rect x="{cx - 4:.2f}" y="{cy - 4:.2f}" width="8" height="8" fill="black"/>')
    out.append("</svg>")
    text = "\n".join(out)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _escape(s: str) -> str:
    return quoteattr(s)[1:-1]
