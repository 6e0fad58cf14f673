"""Minimal SVG line charts for run traces (no plotting dependency)."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_chart", "write_run_plots", "PANELS"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#7f7f7f")

# file stem -> (title, y label, [(trace, legend)], dashed band around z_r*)
PANELS = {
    "inflow": ("Upstream discharge", "m3/s", [("q_e", "Q_e")], False),
    "perturbations": ("Perturbations", "m3/s", [("w", "lock flushes W"), ("bias", "bias")], False),
    "command": ("Command", "m3/s", [("u_raw", "raw"), ("u_applied", "applied")], False),
    "z_tracking": ("Actuator-side level", "m", [("z_star", "z*"), ("z", "z")], False),
    "zr_tracking": ("Remote level", "m", [("z_r_star", "z_r*"), ("z_r", "z_r")], True),
}


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    return np.arange(np.ceil(lo / step) * step, hi + step * 1e-9, step)


def line_chart(x, series, *, title: str, xlabel: str, ylabel: str,
               band=None, width: int = 900, height: int = 300) -> str:
    """Return an SVG document with one polyline per ``(label, y)`` in ``series``.

    ``band`` is an optional ``(lower, upper)`` pair of arrays drawn dashed.
    """
    x = np.asarray(x, dtype=float)
    left, right, top, bottom = 70, 20, 30, 45
    pw, ph = width - left - right, height - top - bottom
    ys = [np.asarray(y, dtype=float) for _, y in series]
    if band is not None:
        ys += [np.asarray(b, dtype=float) for b in band]
    y_lo = min(float(np.nanmin(y)) for y in ys)
    y_hi = max(float(np.nanmax(y)) for y in ys)
    pad = 0.05 * (y_hi - y_lo) or 0.5 * max(abs(y_hi), 1e-3)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = float(x[0]), float(x[-1]) if x[-1] > x[0] else float(x[0]) + 1.0

    def px(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    def path(y):
        pts = " ".join(f"{px(a):.1f},{py(b):.2f}" for a, b in zip(x, y))
        return pts

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for v in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{left}" x2="{left + pw}" y1="{py(v):.1f}" y2="{py(v):.1f}" '
                   f'stroke="#ddd"/>')
        out.append(f'<text x="{left - 5}" y="{py(v) + 4:.1f}" text-anchor="end">{v:g}</text>')
    for v in _ticks(x_lo, x_hi):
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 15}" text-anchor="middle">{v:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2}" transform="rotate(-90 14 {top + ph / 2})" '
               f'text-anchor="middle">{escape(ylabel)}</text>')
    if band is not None:
        for b in band:
            out.append(f'<polyline fill="none" stroke="#888" stroke-dasharray="4 3" '
                       f'points="{path(b)}"/>')
    for i, (label, y) in enumerate(series):
        c = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.2" '
                   f'points="{path(np.asarray(y, dtype=float))}"/>')
        lx = left + pw - 150
        ly = top + 14 + 14 * i
        out.append(f'<line x1="{lx}" x2="{lx + 18}" y1="{ly - 4}" y2="{ly - 4}" stroke="{c}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{lx + 22}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_run_plots(traces: dict, out_dir, halfwidth: float = 0.10) -> list[Path]:
    """One SVG per panel of :data:`PANELS`; returns the written paths."""
    out_dir = Path(out_dir)
    hours = np.asarray(traces["t_s"]) / 3600.0
    paths = []
    for stem, (title, unit, cols, with_band) in PANELS.items():
        band = None
        if with_band:
            ref = np.asarray(traces["z_r_star"])
            band = (ref - halfwidth, ref + halfwidth)
        svg = line_chart(hours, [(label, traces[c]) for c, label in cols], title=title,
                         xlabel="time (h)", ylabel=unit, band=band)
        p = out_dir / f"{stem}.svg"
        p.write_text(svg, encoding="utf-8")
        paths.append(p)
    return paths
