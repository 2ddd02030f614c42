"""Minimal deterministic SVG 1.1 emission for run inspection.

Three plot builders: 2D scatter with a manifold polyline overlay, a
movingdot frame strip with mask heat overlay, and metric-vs-axis line
plots. Output is plain XML with no external dependencies.
"""

from __future__ import annotations

import numpy as np

_HEADER = '<?xml version="1.0" encoding="UTF-8"?>\n'

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


class SvgCanvas:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.elements: list[str] = []

    def rect(self, x, y, w, h, fill, opacity=None, stroke=None):
        attrs = f'x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" fill="{fill}"'
        if opacity is not None:
            attrs += f' fill-opacity="{_fmt(opacity)}"'
        if stroke is not None:
            attrs += f' stroke="{stroke}"'
        self.elements.append(f"<rect {attrs}/>")

    def circle(self, cx, cy, r, fill, opacity=None):
        attrs = f'cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r)}" fill="{fill}"'
        if opacity is not None:
            attrs += f' fill-opacity="{_fmt(opacity)}"'
        self.elements.append(f"<circle {attrs}/>")

    def polyline(self, pts, stroke, width=1.0, opacity=None):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        attrs = f'points="{coords}" fill="none" stroke="{stroke}" stroke-width="{_fmt(width)}"'
        if opacity is not None:
            attrs += f' stroke-opacity="{_fmt(opacity)}"'
        self.elements.append(f"<polyline {attrs}/>")

    def line(self, x1, y1, x2, y2, stroke, width=1.0):
        self.elements.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{_fmt(width)}"/>'
        )

    def text(self, x, y, content, size=12, anchor="start", fill="#222222"):
        self.elements.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{_fmt(size)}" '
            f'font-family="sans-serif" text-anchor="{anchor}" fill="{fill}">{content}</text>'
        )

    def to_xml(self) -> str:
        body = "\n".join(self.elements)
        return (
            _HEADER
            + f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{_fmt(self.width)}" height="{_fmt(self.height)}" '
            f'viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">\n'
            + body
            + "\n</svg>\n"
        )


class _Axes:
    """Affine map from data space into a margin-padded viewport."""

    def __init__(self, xlim, ylim, width, height, margin=40.0):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.margin = margin
        self.width = width
        self.height = height
        self.sx = (width - 2 * margin) / (self.x1 - self.x0)
        self.sy = (height - 2 * margin) / (self.y1 - self.y0)

    def px(self, x):
        return self.margin + (x - self.x0) * self.sx

    def py(self, y):
        # SVG y grows downward.
        return self.height - self.margin - (y - self.y0) * self.sy

    def frame(self, canvas: SvgCanvas):
        m = self.margin
        canvas.rect(m, m, self.width - 2 * m, self.height - 2 * m, "none", stroke="#aaaaaa")


def _limits(arrays, pad=0.05):
    lo = min(float(a.min()) for a in arrays if a.size)
    hi = max(float(a.max()) for a in arrays if a.size)
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    return lo - pad * span, hi + pad * span


def scatter_plot(
    point_sets: list[tuple[str, np.ndarray]],
    polyline: np.ndarray | None = None,
    title: str = "",
    width: float = 480.0,
    height: float = 480.0,
) -> str:
    """Overlayed point sets (name, (N, 2) array) with an optional curve."""
    arrays = [np.asarray(p, dtype=np.float64).reshape(-1, 2) for _, p in point_sets]
    ref = arrays + ([np.asarray(polyline)] if polyline is not None else [])
    xlim = _limits([a[:, 0] for a in ref])
    ylim = _limits([a[:, 1] for a in ref])
    canvas = SvgCanvas(width, height)
    ax = _Axes(xlim, ylim, width, height)
    ax.frame(canvas)
    if title:
        canvas.text(width / 2, 20, title, size=14, anchor="middle")
    if polyline is not None:
        pl = np.asarray(polyline, dtype=np.float64)
        step = max(1, len(pl) // 512)
        pts = [(ax.px(x), ax.py(y)) for x, y in pl[::step]]
        canvas.polyline(pts, stroke="#222222", width=1.5, opacity=0.8)
    for ci, ((name, _), arr) in enumerate(zip(point_sets, arrays)):
        color = _PALETTE[ci % len(_PALETTE)]
        for x, y in arr:
            canvas.circle(ax.px(x), ax.py(y), 1.6, color, opacity=0.55)
        canvas.text(ax.margin + 6, ax.margin + 16 * (ci + 1), name, fill=color)
    return canvas.to_xml()


def _gray(v: float) -> str:
    level = int(round(255 * (1.0 - min(max(v, 0.0), 1.0))))
    return f"#{level:02x}{level:02x}{level:02x}"


def frame_strip(
    clip: np.ndarray,
    mask: np.ndarray | None = None,
    title: str = "",
    cell: float = 8.0,
) -> str:
    """Clip frames side by side; mask locations overlaid in translucent red."""
    clip = np.asarray(clip, dtype=np.float64)
    frames, h, w = clip.shape[0], clip.shape[1], clip.shape[2]
    pad = 6.0
    width = frames * (w * cell + pad) + pad
    height = h * cell + 2 * pad + (20 if title else 0)
    top = pad + (20 if title else 0)
    canvas = SvgCanvas(width, height)
    if title:
        canvas.text(width / 2, 14, title, size=13, anchor="middle")
    for f in range(frames):
        ox = pad + f * (w * cell + pad)
        for yy in range(h):
            for xx in range(w):
                canvas.rect(ox + xx * cell, top + yy * cell, cell, cell, _gray(clip[f, yy, xx, 0]))
        if mask is not None:
            for yy in range(h):
                for xx in range(w):
                    if mask[f, yy, xx, 0] > 0:
                        canvas.rect(
                            ox + xx * cell, top + yy * cell, cell, cell, "#d62728", opacity=0.35
                        )
        canvas.rect(ox, top, w * cell, h * cell, "none", stroke="#888888")
    return canvas.to_xml()


def line_plot(
    x_values,
    series: list[tuple[str, list[float]]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    width: float = 480.0,
    height: float = 320.0,
) -> str:
    """Metric-vs-axis curves with point markers."""
    xs = np.asarray(x_values, dtype=np.float64)
    ys = [np.asarray(v, dtype=np.float64) for _, v in series]
    xlim = _limits([xs])
    ylim = _limits(ys)
    canvas = SvgCanvas(width, height)
    ax = _Axes(xlim, ylim, width, height)
    ax.frame(canvas)
    if title:
        canvas.text(width / 2, 20, title, size=14, anchor="middle")
    if x_label:
        canvas.text(width / 2, height - 8, x_label, anchor="middle")
    if y_label:
        canvas.text(12, ax.margin - 8, y_label)
    canvas.text(ax.margin, height - ax.margin + 16, _fmt(xlim[0]), size=10)
    canvas.text(width - ax.margin, height - ax.margin + 16, _fmt(xlim[1]), size=10, anchor="end")
    canvas.text(ax.margin - 4, height - ax.margin, _fmt(ylim[0]), size=10, anchor="end")
    canvas.text(ax.margin - 4, ax.margin + 4, _fmt(ylim[1]), size=10, anchor="end")
    for ci, ((name, _), arr) in enumerate(zip(series, ys)):
        color = _PALETTE[ci % len(_PALETTE)]
        pts = [(ax.px(x), ax.py(y)) for x, y in zip(xs, arr)]
        canvas.polyline(pts, stroke=color, width=1.8)
        for px, py in pts:
            canvas.circle(px, py, 2.5, color)
        canvas.text(width - ax.margin - 6, ax.margin + 16 * (ci + 1), name, anchor="end", fill=color)
    return canvas.to_xml()
