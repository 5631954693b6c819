"""Deterministic SVG rendering of datasets, fields, level sets, traces and
decision boundaries.

SVG is text, so identical inputs give byte-identical plots, which makes the
renders testable.  The viewBox is expressed in data units with the y axis
flipped (points are emitted at (x, -y)).  Class colors are fixed:
0 = red, 1 = blue, 2 = green.
"""

from __future__ import annotations

import io

import numpy as np

from .topofield import ScalarField

CLASS_COLORS = ("red", "blue", "green", "orange", "purple", "brown")


def _f(x: float) -> str:
    return format(float(x), ".6g")


class SvgCanvas:
    def __init__(self, x_lo, x_hi, y_lo, y_hi, pad_frac=0.05):
        pad = pad_frac * max(x_hi - x_lo, y_hi - y_lo)
        self.x_lo = x_lo - pad
        self.y_hi = y_hi + pad
        self.width = (x_hi - x_lo) + 2 * pad
        self.height = (y_hi - y_lo) + 2 * pad
        self.elements: list[str] = []

    def group(self, label: str, body: list[str]):
        self.elements.append(f'<g id="{label}">')
        self.elements.extend(body)
        self.elements.append("</g>")

    def render(self) -> str:
        buf = io.StringIO()
        buf.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        buf.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="{_f(self.x_lo)} {_f(-self.y_hi)} {_f(self.width)} {_f(self.height)}">\n'
        )
        for el in self.elements:
            buf.write(el + "\n")
        buf.write("</svg>\n")
        return buf.getvalue()


def _markers(points: np.ndarray, color: str, size: float) -> list[str]:
    return [
        f'<circle cx="{_f(p[0])}" cy="{_f(-p[1])}" r="{_f(size)}" fill="{color}"/>'
        for p in points
    ]


def render_scatter(points: np.ndarray, labels: np.ndarray, point_size: float = 0.02) -> str:
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    canvas = SvgCanvas(points[:, 0].min(), points[:, 0].max(), points[:, 1].min(), points[:, 1].max())
    for cls in np.unique(labels):
        pts = points[labels == cls]
        color = CLASS_COLORS[cls % len(CLASS_COLORS)]
        canvas.group(f"class-{cls}", _markers(pts, color, point_size))
    return canvas.render()


def _gray(v: float) -> str:
    g = int(round(255 * (1.0 - v)))
    return f"#{g:02x}{g:02x}{g:02x}"


def render_field_heatmap(field: ScalarField, levels: int = 16) -> str:
    """Row-wise run-length-encoded rectangles of the quantized field."""
    x_lo, x_hi, y_lo, y_hi = field.domain
    nx, ny = field.resolution
    dx, dy = field.cell_size
    vmax = float(field.values.max()) or 1.0
    quant = np.minimum((field.values / vmax * levels).astype(int), levels - 1)
    rects = []
    for i in range(nx):
        j = 0
        while j < ny:
            q = quant[i, j]
            j2 = j
            while j2 + 1 < ny and quant[i, j2 + 1] == q:
                j2 += 1
            if q > 0:
                x = x_lo + i * dx
                y_top = y_lo + (j2 + 1) * dy
                rects.append(
                    f'<rect x="{_f(x)}" y="{_f(-y_top)}" width="{_f(dx)}" '
                    f'height="{_f((j2 - j + 1) * dy)}" fill="{_gray(q / (levels - 1))}"/>'
                )
            j = j2 + 1
    canvas = SvgCanvas(x_lo, x_hi, y_lo, y_hi)
    canvas.group("heatmap", rects)
    return canvas.render()


# marching-squares edge table: per case, list of (edge_a, edge_b) segments;
# edges 0..3 are bottom, right, top, left of the cell in index space
_MS_SEGMENTS = {
    0: [], 15: [],
    1: [(3, 0)], 2: [(0, 1)], 4: [(1, 2)], 8: [(2, 3)],
    3: [(3, 1)], 6: [(0, 2)], 12: [(1, 3)], 9: [(0, 2)],
    5: [(3, 2), (0, 1)], 10: [(3, 0), (1, 2)],
    7: [(3, 2)], 14: [(0, 3)], 13: [(0, 1)], 11: [(1, 2)],
}


def _interp(p, q, vp, vq, lam):
    t = 0.5 if vq == vp else (lam - vp) / (vq - vp)
    t = min(max(t, 0.0), 1.0)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def levelset_segments(field: ScalarField, lam: float) -> list[tuple]:
    """Marching-squares segments of the lam contour, in data units."""
    x_lo, x_hi, y_lo, y_hi = field.domain
    nx, ny = field.resolution
    dx, dy = field.cell_size
    v = field.values
    segs = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            c00 = (x_lo + (i + 0.5) * dx, y_lo + (j + 0.5) * dy)
            c10 = (c00[0] + dx, c00[1])
            c01 = (c00[0], c00[1] + dy)
            c11 = (c00[0] + dx, c00[1] + dy)
            v00, v10, v01, v11 = v[i, j], v[i + 1, j], v[i, j + 1], v[i + 1, j + 1]
            case = (
                (v00 >= lam) * 1 + (v10 >= lam) * 2 + (v11 >= lam) * 4 + (v01 >= lam) * 8
            )
            if case in (0, 15):
                continue
            corners = {0: (c00, c10, v00, v10), 1: (c10, c11, v10, v11),
                       2: (c01, c11, v01, v11), 3: (c00, c01, v00, v01)}
            for ea, eb in _MS_SEGMENTS[case]:
                pa = _interp(*corners[ea], lam)
                pb = _interp(*corners[eb], lam)
                segs.append((pa, pb))
    return segs


def render_levelset_outline(field: ScalarField, lam: float, color: str = "black") -> str:
    segs = levelset_segments(field, lam)
    parts = []
    for (xa, ya), (xb, yb) in segs:
        parts.append(f"M {_f(xa)} {_f(-ya)} L {_f(xb)} {_f(-yb)}")
    x_lo, x_hi, y_lo, y_hi = field.domain
    canvas = SvgCanvas(x_lo, x_hi, y_lo, y_hi)
    canvas.group(
        "levelset",
        [f'<path d="{" ".join(parts)}" stroke="{color}" fill="none" stroke-width="0.01"/>']
        if parts
        else [],
    )
    return canvas.render()


def render_trace(trace_x: np.ndarray, background: np.ndarray | None = None,
                 background_labels: np.ndarray | None = None) -> str:
    """Optimization path from cyan to magenta over an optional scatter."""
    trace_x = np.asarray(trace_x, dtype=float)
    allpts = trace_x if background is None else np.concatenate([trace_x, background])
    canvas = SvgCanvas(allpts[:, 0].min(), allpts[:, 0].max(), allpts[:, 1].min(), allpts[:, 1].max())
    if background is not None:
        labels = (
            background_labels if background_labels is not None else np.zeros(len(background), dtype=int)
        )
        for cls in np.unique(labels):
            canvas.group(
                f"data-class-{cls}",
                _markers(background[labels == cls], "#cccccc", 0.015),
            )
    pline = " ".join(f"{_f(p[0])},{_f(-p[1])}" for p in trace_x)
    canvas.group(
        "trace-path",
        [f'<polyline points="{pline}" stroke="#888888" fill="none" stroke-width="0.008"/>'],
    )
    n = len(trace_x)
    dots = []
    for k, p in enumerate(trace_x):
        f = k / max(n - 1, 1)
        r = int(round(255 * f))
        b = 255
        g = int(round(255 * (1 - f)))
        dots.append(
            f'<circle cx="{_f(p[0])}" cy="{_f(-p[1])}" r="0.02" fill="#{r:02x}{g:02x}{b:02x}"/>'
        )
    canvas.group("trace-steps", dots)
    return canvas.render()


def render_boundary(labels: np.ndarray, domain) -> str:
    """Label grid as class-colored cells (run-length encoded per row)."""
    x_lo, x_hi, y_lo, y_hi = domain
    nx, ny = labels.shape
    dx = (x_hi - x_lo) / nx
    dy = (y_hi - y_lo) / ny
    rects = []
    for i in range(nx):
        j = 0
        while j < ny:
            q = labels[i, j]
            j2 = j
            while j2 + 1 < ny and labels[i, j2 + 1] == q:
                j2 += 1
            x = x_lo + i * dx
            y_top = y_lo + (j2 + 1) * dy
            color = CLASS_COLORS[int(q) % len(CLASS_COLORS)]
            rects.append(
                f'<rect x="{_f(x)}" y="{_f(-y_top)}" width="{_f(dx)}" '
                f'height="{_f((j2 - j + 1) * dy)}" fill="{color}" fill-opacity="0.5"/>'
            )
            j = j2 + 1
    canvas = SvgCanvas(x_lo, x_hi, y_lo, y_hi)
    canvas.group("boundary", rects)
    return canvas.render()
