"""SVG phase portraits: shaded unsafe region, ``h = 0`` boundary, trajectory polylines."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .errors import ValidationError
from .safe_sets import EllipsoidSet, HalfSpaceSet, PolytopeSet

COLORS = ("#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
WIDTH, HEIGHT, PAD = 640, 480, 50


def _clip(poly: np.ndarray, q: np.ndarray, r: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon against ``q^T x + r >= 0``."""
    out = []
    k = len(poly)
    for i in range(k):
        a, b = poly[i], poly[(i + 1) % k]
        ha, hb = q @ a + r, q @ b + r
        if ha >= 0:
            out.append(a)
        if (ha >= 0) != (hb >= 0):
            s = ha / (ha - hb)
            out.append(a + s * (b - a))
    return np.array(out).reshape(-1, 2)


def safe_region_polygon(safe_set, box) -> np.ndarray:
    """Safe region intersected with ``box = (xmin, xmax, ymin, ymax)`` as a polygon."""
    x0, x1, y0, y1 = box
    if isinstance(safe_set, EllipsoidSet):
        w, U = np.linalg.eigh(safe_set.E)
        th = np.linspace(0.0, 2 * np.pi, 361)[:-1]
        circle = np.stack([np.cos(th), np.sin(th)], axis=1)
        return circle * np.sqrt(safe_set.r / w) @ U.T
    if isinstance(safe_set, HalfSpaceSet):
        faces = [(safe_set.q, safe_set.r)]
    elif isinstance(safe_set, PolytopeSet):
        faces = [(safe_set.Q[:, i], safe_set.r[i]) for i in range(safe_set.n_faces)]
    else:
        raise ValidationError(f"cannot draw {type(safe_set).__name__}")
    poly = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    for q, r in faces:
        poly = _clip(poly, np.asarray(q, float), float(r))
        if len(poly) == 0:
            break
    return poly


def phase_portrait_svg(trajectories, labels, safe_set, title: str = "") -> str:
    """Render 2-D state trajectories over the safe set as an SVG document."""
    if safe_set.dim != 2:
        raise ValidationError("phase portraits need a 2-D state")
    if not trajectories:
        raise ValidationError("nothing to plot")
    pts = np.vstack([t.states for t in trajectories])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-3)
    lo, hi = lo - 0.25 * span, hi + 0.25 * span
    box = (lo[0], hi[0], lo[1], hi[1])
    sx = (WIDTH - 2 * PAD) / (hi[0] - lo[0])
    sy = (HEIGHT - 2 * PAD) / (hi[1] - lo[1])

    def xy(p):
        return f"{PAD + (p[0] - lo[0]) * sx:.2f},{HEIGHT - PAD - (p[1] - lo[1]) * sy:.2f}"

    safe = safe_region_polygon(safe_set, box)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<clipPath id="plot-area"><rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" '
        f'height="{HEIGHT - 2 * PAD}"/></clipPath>',
        f'<rect class="unsafe" x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" '
        f'height="{HEIGHT - 2 * PAD}" fill="#f4b6b6"/>',
        '<g clip-path="url(#plot-area)">',
    ]
    if len(safe):
        poly = " ".join(xy(p) for p in safe)
        parts.append(f'<polygon class="safe" points="{poly}" fill="white"/>')
        parts.append(
            f'<polygon class="boundary" points="{poly}" fill="none" stroke="#c00000" stroke-width="1.5"/>'
        )
    for k, (traj, label) in enumerate(zip(trajectories, labels)):
        color = COLORS[k % len(COLORS)]
        line = " ".join(xy(p) for p in traj.states)
        parts.append(
            f'<polyline class="trajectory" data-label="{escape(label)}" points="{line}" '
            f'fill="none" stroke="{color}" stroke-width="1.2"/>'
        )
    parts.append("</g>")
    parts.append(
        f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
        'fill="none" stroke="black"/>'
    )
    for k, label in enumerate(labels):
        y = PAD + 16 + 16 * k
        color = COLORS[k % len(COLORS)]
        parts.append(
            f'<line x1="{WIDTH - PAD - 150}" y1="{y - 4}" x2="{WIDTH - PAD - 130}" y2="{y - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text class="legend" x="{WIDTH - PAD - 124}" y="{y}" font-size="12">{escape(label)}</text>'
        )
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" font-size="12" text-anchor="middle">x (angle)</text>')
    parts.append(
        f'<text x="14" y="{HEIGHT / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">y (angular velocity)</text>'
    )
    if title:
        parts.append(f'<text x="{WIDTH / 2}" y="24" font-size="14" text-anchor="middle">{escape(title)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
