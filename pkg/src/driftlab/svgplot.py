"""Minimal SVG scatter plots: no plotting dependency, just enough to eyeball
a point cloud. Sphere clouds are shown as two orthographic hemispheres side
by side (viewed from +z and -z)."""

from __future__ import annotations

import io

import numpy as np

_W, _H, _PAD = 420, 420, 40


def _header(width: int, height: int, title: str) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{title}</text>\n')


def _circles(xy: np.ndarray, color: str, r: float = 2.0) -> str:
    return "".join(
        f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}" '
        f'fill-opacity="0.6"/>\n' for x, y in xy)


def scatter_svg(points: np.ndarray, title: str = "", color: str = "#1f6fb2",
                bounds: tuple[float, float, float, float] | None = None) -> str:
    """2-D scatter with axes. bounds = (xmin, xmax, ymin, ymax); computed
    from the data (with 5% margin) when omitted."""
    p = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
    if bounds is None:
        lo, hi = p.min(axis=0), p.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        lo, hi = lo - 0.05 * span, hi + 0.05 * span
        bounds = (lo[0], hi[0], lo[1], hi[1])
    xmin, xmax, ymin, ymax = bounds
    sx = (_W - 2 * _PAD) / (xmax - xmin)
    sy = (_H - 2 * _PAD) / (ymax - ymin)
    xy = np.stack([_PAD + (p[:, 0] - xmin) * sx,
                   _H - _PAD - (p[:, 1] - ymin) * sy], axis=1)
    buf = io.StringIO()
    buf.write(_header(_W, _H, title))
    buf.write(f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" '
              f'height="{_H - 2 * _PAD}" fill="none" stroke="#888"/>\n')
    buf.write(_circles(xy, color))
    buf.write("</svg>\n")
    return buf.getvalue()


def sphere_svg(points: np.ndarray, title: str = "",
               color: str = "#1f6fb2") -> str:
    """Two orthographic hemisphere views of unit vectors: left viewed from
    +z (northern points), right from -z (southern points, x mirrored so the
    two views share orientation along the seam)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    width = 2 * _W
    radius = (_W - 2 * _PAD) / 2.0
    buf = io.StringIO()
    buf.write(_header(width, _H, title))
    for panel, (mask, flip, label) in enumerate([
            (p[:, 2] >= 0, 1.0, "z &#8805; 0"),
            (p[:, 2] < 0, -1.0, "z &lt; 0")]):
        cx = panel * _W + _W / 2.0
        cy = _H / 2.0 + 10
        buf.write(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{radius:.1f}" '
                  f'fill="none" stroke="#888"/>\n')
        buf.write(f'<text x="{cx:.0f}" y="{_H - 8}" text-anchor="middle" '
                  f'font-family="monospace" font-size="12">{label}</text>\n')
        q = p[mask]
        if len(q):
            xy = np.stack([cx + flip * q[:, 0] * radius,
                           cy - q[:, 1] * radius], axis=1)
            buf.write(_circles(xy, color))
    buf.write("</svg>\n")
    return buf.getvalue()


def cloud_svg(points: np.ndarray, family: str, title: str = "") -> str:
    """Dispatch on manifold family: sphere gets hemispheres, hyperboloid is
    shown in its spatial coordinates, everything else as the first two
    ambient coordinates."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if family == "sphere":
        return sphere_svg(p, title)
    if family == "hyperboloid":
        return scatter_svg(p[:, 1:3], title)
    if p.shape[1] == 1:
        p = np.concatenate([p, np.zeros_like(p)], axis=1)
    return scatter_svg(p, title)
