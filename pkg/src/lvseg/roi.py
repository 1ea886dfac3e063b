"""Left-ventricle region-of-interest detection from cardiac motion.

The LV is the structure that moves most over the cardiac cycle. Per slice,
the magnitude of the first temporal harmonic highlights it; summing over
slices reinforces it, a two-cluster split isolates the moving pixels, and a
circle Hough transform finds the round LV outline. The bounding box of the
strongest circles, padded by a margin, becomes the ROI.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .errors import (DegenerateMap, NoCircles, RectOutOfBounds, RoiNotFound, ShapeMismatch,
                     TooFewFrames, ValidationError)
from .types import Circle, ImageStack, RoiRect


def first_harmonic_map(series) -> np.ndarray:
    """Per-pixel magnitude of DFT bin 1 of a ``[T][H][W]`` time series."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 3:
        raise ValidationError("expected a [T][H][W] series")
    if series.shape[0] < 2:
        raise TooFewFrames("the first harmonic needs at least 2 frames")
    out = np.abs(np.fft.fft(series, axis=0)[1])
    # exactly static pixels have no harmonic; drop FFT round-off there
    out[np.ptp(series, axis=0) == 0] = 0.0
    return out


def harmonic_sum(stack) -> np.ndarray:
    """Sum of per-slice first-harmonic maps over a ``[S][T][H][W]`` record."""
    data = stack.data if isinstance(stack, ImageStack) else stack
    if isinstance(data, np.ndarray):
        if data.ndim != 4:
            raise ShapeMismatch("expected a [S][T][H][W] array")
        slices = list(data)
    else:
        slices = [np.asarray(s) for s in data]
    shapes = {s.shape[1:] for s in slices}
    if len(shapes) != 1:
        raise ShapeMismatch(f"slices differ in image size: {sorted(shapes)}")
    total = np.zeros(next(iter(shapes)))
    for s in slices:  # fixed slice order keeps the float sum deterministic
        total += first_harmonic_map(s)
    return total


def kmeans2_threshold(values) -> tuple[float, float]:
    """1-D two-means on ``values``; returns the final (low, high) centroids.

    Centroids start at the min and max; a value equidistant from both goes to
    the high cluster. Iterates until the assignment stops changing.
    """
    v = np.asarray(values, dtype=float).ravel()
    lo, hi = v.min(), v.max()
    if not hi > lo:
        raise DegenerateMap("map is constant; cannot split into two clusters")
    assign = None
    while True:
        new = np.abs(v - hi) <= np.abs(v - lo)
        if assign is not None and np.array_equal(new, assign):
            return lo, hi
        assign = new
        lo, hi = v[~assign].mean(), v[assign].mean()


def binarize_kmeans2(values) -> np.ndarray:
    """Mark pixels belonging to the high-valued of two 1-D k-means clusters."""
    values = np.asarray(values, dtype=float)
    lo, hi = kmeans2_threshold(values)
    return (np.abs(values - hi) <= np.abs(values - lo)).astype(np.uint8)


def _edges(binary: np.ndarray) -> np.ndarray:
    """Foreground pixels with at least one 4-connected background neighbour."""
    fg = binary.astype(bool)
    interior = ndimage.binary_erosion(fg, structure=ndimage.generate_binary_structure(2, 1),
                                      border_value=0)
    return fg & ~interior


def circle_kernel(radius: int) -> np.ndarray:
    """Binary ``(2r+1)^2`` stencil of integer offsets on a circle of ``radius``."""
    n = max(8, int(math.ceil(2 * math.pi * radius * 4)))
    theta = np.linspace(0, 2 * math.pi, n, endpoint=False)
    dy = np.rint(radius * np.sin(theta)).astype(int) + radius
    dx = np.rint(radius * np.cos(theta)).astype(int) + radius
    k = np.zeros((2 * radius + 1, 2 * radius + 1))
    k[dy, dx] = 1
    return k


def hough_accumulator(binary, radii) -> np.ndarray:
    """Votes per ``(radius, row, col)`` normalised by the stencil size."""
    edges = _edges(np.asarray(binary)).astype(float)
    acc = np.zeros((len(radii),) + edges.shape)
    if not edges.any():
        return acc
    for i, r in enumerate(radii):
        k = circle_kernel(int(r))
        acc[i] = np.rint(fftconvolve(edges, k, mode="same")) / k.sum()
    return acc


def hough_circles(binary, r_min: int = 15, r_max: int = 64, keep: int = 30,
                  min_distance: float | None = None, min_score: float = 0.2) -> list[Circle]:
    """Detect up to ``keep`` circles, strongest first.

    Votes come from the outline of the binary image. A candidate is dropped
    when its centre lies within ``min_distance`` (default ``r_min``) of an
    already accepted one, or when fewer than ``min_score`` of its circumference
    is supported.
    """
    if r_min < 1 or r_max < r_min:
        raise ValidationError("need 1 <= r_min <= r_max")
    binary = np.asarray(binary)
    min_distance = r_min if min_distance is None else min_distance
    radii = np.arange(r_min, r_max + 1)
    acc = hough_accumulator(binary, radii)
    flat = acc.ravel()
    candidates = np.flatnonzero(flat >= min_score)
    if candidates.size == 0:
        return []
    # stable order: score descending, then radius/row/col ascending
    order = candidates[np.lexsort((candidates, -flat[candidates]))]
    chosen: list[Circle] = []
    for idx in order:
        ri, y, x = np.unravel_index(idx, acc.shape)
        if any((y - c.center[0]) ** 2 + (x - c.center[1]) ** 2 < min_distance ** 2 for c in chosen):
            continue
        chosen.append(Circle((int(y), int(x)), int(radii[ri]), float(flat[idx])))
        if len(chosen) >= keep:
            break
    return chosen


def roi_rectangle(circles, expand_frac: float = 0.10, bounds=None) -> RoiRect:
    """Bounding box of the circles, padded by ``expand_frac`` of its own size.

    ``bounds`` is the image ``(rows, cols)``; the result is clamped to it.
    """
    circles = list(circles)
    if not circles:
        raise NoCircles("no circles to bound")
    r0 = min(c.center[0] - c.radius for c in circles)
    r1 = max(c.center[0] + c.radius for c in circles)
    c0 = min(c.center[1] - c.radius for c in circles)
    c1 = max(c.center[1] + c.radius for c in circles)
    pad_r = math.ceil(expand_frac * (r1 - r0) - 1e-9)
    pad_c = math.ceil(expand_frac * (c1 - c0) - 1e-9)
    r0, r1, c0, c1 = r0 - pad_r, r1 + pad_r, c0 - pad_c, c1 + pad_c
    if bounds is not None:
        rows, cols = bounds
        r0, c0 = max(r0, 0), max(c0, 0)
        r1, c1 = min(r1, rows), min(c1, cols)
    return RoiRect(int(r0), int(r1), int(c0), int(c1))


def apply_roi(img, rect: RoiRect) -> np.ndarray:
    """Zero every pixel outside ``rect``."""
    img = np.asarray(img)
    rows, cols = img.shape[-2:]
    if rect.row_max > rows or rect.col_max > cols:
        raise RectOutOfBounds(f"{rect} exceeds image size {(rows, cols)}")
    out = np.zeros_like(img)
    out[..., rect.row_min:rect.row_max, rect.col_min:rect.col_max] = \
        img[..., rect.row_min:rect.row_max, rect.col_min:rect.col_max]
    return out


def roi_mask(shape, rect: RoiRect) -> np.ndarray:
    return apply_roi(np.ones(shape, dtype=np.uint8), rect)


def detect_roi(stack, r_min: int = 15, r_max: int = 64, keep: int = 30,
               expand_frac: float = 0.10, return_circles: bool = False):
    """Harmonic sum -> two-means -> Hough circles -> padded bounding box."""
    hmap = harmonic_sum(stack)
    try:
        binary = binarize_kmeans2(hmap)
    except DegenerateMap as exc:
        raise RoiNotFound("no motion found in the record") from exc
    circles = hough_circles(binary, r_min, r_max, keep)
    if not circles:
        raise RoiNotFound("no circles found in the motion map")
    rect = roi_rectangle(circles, expand_frac, hmap.shape)
    return (rect, circles) if return_circles else rect
