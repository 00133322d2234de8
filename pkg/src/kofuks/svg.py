"""Static SVG plots: domain boundary, sublevel curve, trajectory polyline.

Coordinates are emitted with 6 decimals inside a fixed 800 x 800 viewBox
mapped from the domain bounding box; there are no styling options, the
files are inspection artifacts.  The first line is a version comment and
the only part allowed to differ between releases.
"""

from __future__ import annotations

import math

import numpy as np

from .domains import PlanarDomain

__all__ = ["render_svg", "level_segments", "trajectory_points"]

VIEW = 800.0
_VERSION_COMMENT = "<!-- kofuks svg v1 -->"


def _mapper(bbox: tuple[float, float, float, float]):
    x0, y0, x1, y1 = bbox
    scale = VIEW / max(x1 - x0, y1 - y0)

    def to_px(z: complex) -> tuple[float, float]:
        # SVG y axis points down
        return (z.real - x0) * scale, (y1 - z.imag) * scale

    return to_px


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def level_segments(domain: PlanarDomain, level: float, n: int = 256,
                   ) -> list[tuple[complex, complex]]:
    """Marching-squares segments of the curve rho = level inside the bbox.

    Cells touching points outside the declared neighborhood are skipped;
    each sign-change cell contributes edge-interpolated segments.
    """
    x0, y0, x1, y1 = domain.bounding_box
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    vals = np.full((n, n), np.nan)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            z = complex(x, y)
            if domain.in_neighborhood(z):
                vals[i, j] = domain.rho(z) - level

    def interp(pa, va, pb, vb) -> complex:
        t = va / (va - vb)
        return pa + t * (pb - pa)

    segs: list[tuple[complex, complex]] = []
    for i in range(n - 1):
        for j in range(n - 1):
            corners = [
                (complex(xs[i], ys[j]), vals[i, j]),
                (complex(xs[i + 1], ys[j]), vals[i + 1, j]),
                (complex(xs[i + 1], ys[j + 1]), vals[i + 1, j + 1]),
                (complex(xs[i], ys[j + 1]), vals[i, j + 1]),
            ]
            if any(math.isnan(v) for _, v in corners):
                continue
            crossings = []
            for k in range(4):
                (pa, va), (pb, vb) = corners[k], corners[(k + 1) % 4]
                if (va < 0.0) != (vb < 0.0):
                    crossings.append(interp(pa, va, pb, vb))
            if len(crossings) == 2:
                segs.append((crossings[0], crossings[1]))
            elif len(crossings) == 4:
                # saddle cell; pair edges by order (shape ambiguity is
                # irrelevant at plot resolution)
                segs.append((crossings[0], crossings[1]))
                segs.append((crossings[2], crossings[3]))
    return segs


def trajectory_points(traj, n: int = 2000) -> list[complex]:
    ts = np.linspace(traj.times[0], traj.times[-1], n)
    return [traj.state(t).z for t in ts]


def _path_from_segments(segs, to_px) -> str:
    parts = []
    for a, b in segs:
        ax, ay = to_px(a)
        bx, by = to_px(b)
        parts.append(f"M {_fmt(ax)} {_fmt(ay)} L {_fmt(bx)} {_fmt(by)}")
    d = " ".join(parts)
    return f'<path d="{d}" fill="none" stroke="gray" stroke-width="1"/>'


def _polyline(points, to_px, stroke: str) -> str:
    coords = " ".join(
        f"{_fmt(px)},{_fmt(py)}" for px, py in (to_px(z) for z in points)
    )
    return (
        f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
        'stroke-width="1"/>'
    )


def render_svg(domain: PlanarDomain, trajectory=None, level: float | None = None,
               level_grid: int = 256, trajectory_samples: int = 2000) -> str:
    """SVG document with the boundary, an optional rho level set, and an
    optional trajectory."""
    to_px = _mapper(domain.bounding_box)
    body = [
        _VERSION_COMMENT,
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW:g} {VIEW:g}">',
        _path_from_segments(level_segments(domain, 0.0, level_grid), to_px),
    ]
    if level is not None:
        body.append(_path_from_segments(
            level_segments(domain, level, level_grid), to_px))
    if trajectory is not None:
        body.append(_polyline(
            trajectory_points(trajectory, trajectory_samples), to_px, "black"))
    body.append("</svg>")
    return "\n".join(body) + "\n"
