"""Tiny dependency-free SVG emitters for line, scatter and vector-field plots.

Decorative output only; CSVs are the ground truth.
"""

from __future__ import annotations

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class _Canvas:
    def __init__(self, width=640, height=480, margin=50):
        self.width = width
        self.height = height
        self.margin = margin
        self.parts = []

    def set_limits(self, xlim, ylim):
        self.xlim = xlim
        self.ylim = ylim

    def to_px(self, x, y):
        m, w, h = self.margin, self.width, self.height
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        sx = (w - 2 * m) / max(x1 - x0, 1e-12)
        sy = (h - 2 * m) / max(y1 - y0, 1e-12)
        return m + (x - x0) * sx, h - m - (y - y0) * sy

    def polyline(self, xs, ys, color, width=1.5):
        pts = " ".join(f"{px:.2f},{py:.2f}"
                       for px, py in (self.to_px(x, y) for x, y in zip(xs, ys)))
        self.parts.append(f'<polyline points="{pts}" fill="none" '
                          f'stroke="{color}" stroke-width="{width}"/>')

    def circle(self, x, y, color, r=3.0):
        px, py = self.to_px(x, y)
        self.parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r}" '
                          f'fill="{color}"/>')

    def segment(self, x0, y0, x1, y1, color, width=1.0):
        p0 = self.to_px(x0, y0)
        p1 = self.to_px(x1, y1)
        self.parts.append(f'<line x1="{p0[0]:.2f}" y1="{p0[1]:.2f}" '
                          f'x2="{p1[0]:.2f}" y2="{p1[1]:.2f}" '
                          f'stroke="{color}" stroke-width="{width}"/>')

    def text(self, s, x, y):
        self.parts.append(f'<text x="{x}" y="{y}" font-size="13" '
                          f'font-family="sans-serif">{s}</text>')

    def write(self, path):
        body = "\n".join(self.parts)
        with open(path, "w") as fh:
            fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
                     f'width="{self.width}" height="{self.height}">\n'
                     f'<rect width="100%" height="100%" fill="white"/>\n'
                     f"{body}\n</svg>\n")


def _limits(arrs):
    lo = min(float(np.min(a)) for a in arrs if len(a))
    hi = max(float(np.max(a)) for a in arrs if len(a))
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(path, series: dict[str, tuple[np.ndarray, np.ndarray]],
              title: str = "") -> None:
    """series: name -> (x, y) arrays; one colored polyline each."""
    c = _Canvas()
    xs = [np.asarray(v[0], dtype=float) for v in series.values()]
    ys = [np.asarray(v[1], dtype=float) for v in series.values()]
    c.set_limits(_limits(xs), _limits(ys))
    for i, (name, (x, y)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        c.polyline(np.asarray(x, float), np.asarray(y, float), color)
        c.text(name, c.width - c.margin - 120, c.margin + 16 * i)
    if title:
        c.text(title, c.margin, 20)
    c.write(path)


def trajectory_plot(path, states: np.ndarray, labels: np.ndarray,
                    title: str = "") -> None:
    """states: (n_points, n_times, dim).  1-d states are drawn against time;
    higher dimensions use the first two state coordinates."""
    c = _Canvas()
    n_pts, n_times, dim = states.shape
    if dim == 1:
        t = np.linspace(0.0, 1.0, n_times)
        c.set_limits(_limits([t]), _limits([states[:, :, 0]]))
        for i in range(n_pts):
            color = _COLORS[0] if labels[i] > 0 else _COLORS[1]
            c.polyline(t, states[i, :, 0], color)
    else:
        c.set_limits(_limits([states[:, :, 0]]), _limits([states[:, :, 1]]))
        for i in range(n_pts):
            color = _COLORS[0] if labels[i] > 0 else _COLORS[1]
            c.polyline(states[i, :, 0], states[i, :, 1], color)
            c.circle(states[i, 0, 0], states[i, 0, 1], color)
    if title:
        c.text(title, c.margin, 20)
    c.write(path)


def field_plot(path, points: np.ndarray, vectors: np.ndarray,
               title: str = "", scale: float = 0.15) -> None:
    """Arrows (plain segments) for a 2-d vector field sample."""
    c = _Canvas()
    c.set_limits(_limits([points[:, 0]]), _limits([points[:, 1]]))
    norm = np.max(np.linalg.norm(vectors, axis=1)) or 1.0
    for (x, y), (u, v) in zip(points, vectors):
        c.segment(x, y, x + scale * u / norm, y + scale * v / norm, _COLORS[0])
    if title:
        c.text(title, c.margin, 20)
    c.write(path)
