"""Tiny SVG line-plot writer with a logarithmic y axis.

Only what the Monte-Carlo report needs: stacked panels, solid lines with
markers for measured curves and dashed lines for reference bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

WIDTH = 520
PANEL_HEIGHT = 260
MARGIN = dict(left=70, right=20, top=30, bottom=45)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple
    y: tuple
    dashed: bool = False


@dataclass(frozen=True)
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: tuple


def _log_range(values):
    vals = [v for v in values if v > 0 and math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo = math.floor(math.log10(min(vals)))
    hi = math.ceil(math.log10(max(vals)))
    return lo, max(hi, lo + 1)


def _panel_svg(panel: Panel, y0: float) -> list:
    xs = [x for s in panel.series for x in s.x]
    ys = [y for s in panel.series for y in s.y]
    xmin, xmax = (min(xs), max(xs)) if xs else (0.0, 1.0)
    if xmax == xmin:
        xmin, xmax = xmin - 1, xmax + 1
    lo, hi = _log_range(ys)
    left, top = MARGIN["left"], y0 + MARGIN["top"]
    w = WIDTH - MARGIN["left"] - MARGIN["right"]
    h = PANEL_HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return left + (x - xmin) / (xmax - xmin) * w

    def py(y):
        return top + h - (math.log10(y) - lo) / (hi - lo) * h

    out = [f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="black"/>',
           f'<text x="{left + w / 2}" y="{top - 10}" text-anchor="middle" '
           f'font-size="13">{escape(panel.title)}</text>',
           f'<text x="{left + w / 2}" y="{top + h + 35}" text-anchor="middle" '
           f'font-size="12">{escape(panel.xlabel)}</text>',
           f'<text x="15" y="{top + h / 2}" font-size="12" text-anchor="middle" '
           f'transform="rotate(-90 15 {top + h / 2})">{escape(panel.ylabel)}</text>']
    for e in range(int(lo), int(hi) + 1):
        yy = py(10.0 ** e)
        out.append(f'<line x1="{left - 4}" y1="{yy:.1f}" x2="{left}" y2="{yy:.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{yy + 4:.1f}" text-anchor="end" '
                   f'font-size="10">1e{e}</text>')
    for x in sorted(set(xs)):
        xx = px(x)
        out.append(f'<line x1="{xx:.1f}" y1="{top + h}" x2="{xx:.1f}" y2="{top + h + 4}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{xx:.1f}" y="{top + h + 16}" text-anchor="middle" '
                   f'font-size="10">{x:g}</text>')
    for i, s in enumerate(panel.series):
        color = COLORS[i % len(COLORS)]
        pts = [(px(x), py(y)) for x, y in zip(s.x, s.y) if y > 0 and math.isfinite(y)]
        if pts:
            path = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}"'
                       f' stroke-width="1.5"{dash}/>')
            if not s.dashed:
                out += [f'<circle cx="{a:.1f}" cy="{b:.1f}" r="3" fill="{color}"/>'
                        for a, b in pts]
        ly = top + 14 + 14 * i
        out.append(f'<text x="{left + w - 6}" y="{ly}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{escape(s.label)}</text>')
    return out


def render(panels) -> str:
    """SVG document with the panels stacked vertically."""
    panels = list(panels)
    height = PANEL_HEIGHT * max(1, len(panels))
    body = []
    for i, p in enumerate(panels):
        body += _panel_svg(p, i * PANEL_HEIGHT)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
            f'viewBox="0 0 {WIDTH} {height}">\n'
            + "\n".join(body) + "\n</svg>\n")


def metrics_panels(table) -> list:
    """Four panels: MSE(xi), MSE(psi) against their bounds, MSE(theta), NMSE(omega)."""
    x = tuple(table.column(table.sweep))
    xlabel = "N_s" if table.sweep == "num_samples" else "SNR (dB)"

    def col(name):
        return tuple(float(v) for v in table.column(name))
    return [
        Panel("MSE(xi)", xlabel, "MSE",
              (Series("estimate", x, col("mse_xi")), Series("CRB", x, col("crb_xi"), True))),
        Panel("MSE(psi)", xlabel, "MSE",
              (Series("estimate", x, col("mse_psi")), Series("CRB", x, col("crb_psi"), True))),
        Panel("MSE(theta)", xlabel, "MSE", (Series("estimate", x, col("mse_theta")),)),
        Panel("NMSE(omega)", xlabel, "NMSE", (Series("estimate", x, col("nmse_omega")),)),
    ]
