"""Ground-truth label handling: contour point lists and multi-class label maps."""
from __future__ import annotations

import math

import numpy as np

from ..errors import DegeneratePolygon, ValidationError
from ..types import ContourMask, MaskSource


def read_contour_text(text: str) -> list[tuple[float, float]]:
    """Parse a contour file holding one ``x y`` pair per line."""
    points = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise ValidationError(f"line {lineno}: expected 'x y', got {line!r}")
        points.append((float(parts[0]), float(parts[1])))
    return points


def _on_segment(px, py, x0, y0, x1, y1, tol=1e-9):
    cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    if abs(cross) > tol * max(1.0, math.hypot(x1 - x0, y1 - y0)):
        return False
    return (min(x0, x1) - tol <= px <= max(x0, x1) + tol
            and min(y0, y1) - tol <= py <= max(y0, y1) + tol)


def rasterize_contour(points, rows: int, cols: int) -> ContourMask:
    """Fill a polygon given as ``(x, y)`` vertices, x = column, y = row.

    Pixel centres sit at integer coordinates. A pixel is set when its centre
    lies inside the polygon under the even-odd rule or on its boundary.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegeneratePolygon(f"need at least 3 contour points, got {len(pts)}")
    xs, ys = pts[:, 0], pts[:, 1]
    x0, y0 = xs, ys
    x1, y1 = np.roll(xs, -1), np.roll(ys, -1)
    mask = np.zeros((rows, cols), dtype=np.uint8)

    row_lo = max(0, int(math.floor(ys.min())))
    row_hi = min(rows - 1, int(math.ceil(ys.max())))
    for r in range(row_lo, row_hi + 1):
        # even-odd crossings of the scanline y = r (half-open edge rule)
        crosses = ((y0 <= r) & (y1 > r)) | ((y1 <= r) & (y0 > r))
        xi = x0[crosses] + (r - y0[crosses]) * (x1[crosses] - x0[crosses]) / (y1[crosses] - y0[crosses])
        xi.sort()
        for a, b in zip(xi[0::2], xi[1::2]):
            c_lo = max(0, int(math.ceil(a)))
            c_hi = min(cols - 1, int(math.floor(b)))
            if c_lo <= c_hi:
                mask[r, c_lo:c_hi + 1] = 1
        # boundary pixels the scanline rule can miss (horizontal edges, right edges)
        for k in range(len(pts)):
            ya, yb = y0[k], y1[k]
            if min(ya, yb) > r or max(ya, yb) < r:
                continue
            xa, xb = x0[k], x1[k]
            if ya == yb:
                lo, hi = sorted((xa, xb))
                c_lo, c_hi = max(0, int(math.ceil(lo))), min(cols - 1, int(math.floor(hi)))
                if c_lo <= c_hi:
                    mask[r, c_lo:c_hi + 1] = 1
            else:
                x = xa + (r - ya) * (xb - xa) / (yb - ya)
                c = int(round(x))
                if 0 <= c < cols and abs(c - x) < 1e-9:
                    mask[r, c] = 1
    return ContourMask(mask, MaskSource.GROUND_TRUTH)


def simplify_acdc_label(label: np.ndarray, lv_class: int) -> ContourMask:
    """Keep only the inner-LV class of a multi-class label map.

    A label without that class yields an all-zero (blank) mask.
    """
    label = np.asarray(label)
    if label.ndim != 2:
        raise ValidationError("label map must be 2-D")
    return ContourMask((label == lv_class).astype(np.uint8), MaskSource.GROUND_TRUTH)
