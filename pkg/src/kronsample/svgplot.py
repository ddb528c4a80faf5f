"""Minimal deterministic SVG output (line charts and grayscale heat maps)."""

from __future__ import annotations

import math

from .errors import InvalidArgumentError

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def line_chart(series: dict[str, list[tuple[float, float]]], path,
               log_y: bool = True, width: int = 640, height: int = 480,
               x_label: str = "", y_label: str = "") -> None:
    """One polyline per series; y-axis optionally log10-scaled."""
    if not series or all(len(pts) == 0 for pts in series.values()):
        raise InvalidArgumentError("nothing to plot")
    tx = lambda v: v
    ty = (lambda v: math.log10(v)) if log_y else (lambda v: v)
    xs = [tx(x) for pts in series.values() for x, _ in pts]
    ys = [ty(y) for pts in series.values() for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    margin = 60
    pw, ph = width - 2 * margin, height - 2 * margin

    def px(x):
        return margin + pw * (tx(x) - x_lo) / (x_hi - x_lo)

    def py(y):
        return height - margin - ph * (ty(y) - y_lo) / (y_hi - y_lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
           f'y2="{height - margin}" stroke="black"/>',
           f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
           f'y2="{height - margin}" stroke="black"/>']
    if x_label:
        out.append(f'<text x="{width // 2}" y="{height - 15}" font-size="14" '
                   f'text-anchor="middle">{x_label}</text>')
    if y_label:
        label = y_label + (" (log10)" if log_y else "")
        out.append(f'<text x="18" y="{height // 2}" font-size="14" text-anchor="middle" '
                   f'transform="rotate(-90 18 {height // 2})">{label}</text>')
    for i, (name, pts) in enumerate(series.items()):
        if not pts:
            continue
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in sorted(pts))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                   f'points="{coords}"/>')
        out.append(f'<text x="{width - margin + 5}" y="{margin + 18 * i + 10}" '
                   f'font-size="12" fill="{color}">{name}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def heatmap(values, path, cell: int = 6) -> None:
    """Grayscale heat map of a 2-d nonnegative array (max-normalized)."""
    rows = [list(r) for r in values]
    if not rows or not rows[0]:
        raise InvalidArgumentError("empty image")
    peak = max(max(r) for r in rows) or 1.0
    h, w = len(rows), len(rows[0])
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * cell}" height="{h * cell}">']
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            level = int(round(255 * (1.0 - min(max(v / peak, 0.0), 1.0))))
            out.append(f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" '
                       f'height="{cell}" fill="rgb({level},{level},{level})"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
