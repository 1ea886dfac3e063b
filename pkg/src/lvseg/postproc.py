"""Removal of spurious predicted contours.

Two strategies: keep the biggest connected component, or keep whichever
component contains the LV centre estimated from the whole patient record.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NoSignal, ValidationError

CENTER_FRACTION = 0.9


@dataclass
class LabeledComponents:
    labels: np.ndarray
    counts: np.ndarray  # counts[k - 1] = pixel count of component k
    centroids: np.ndarray  # (n, 2) row/col means

    @property
    def n(self) -> int:
        return len(self.counts)


def _binary(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValidationError("mask must be 2-D")
    if not np.isin(mask, (0, 1)).all():
        raise ValidationError("mask must be binary")
    return mask.astype(bool)


def components(mask, connectivity: int = 8) -> LabeledComponents:
    """Connected components; ids run from 1 in raster order of first pixel."""
    if connectivity not in (4, 8):
        raise ValidationError("connectivity must be 4 or 8")
    fg = _binary(mask)
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labels, n = ndimage.label(fg, structure=structure)
    if n == 0:
        return LabeledComponents(labels, np.zeros(0, dtype=int), np.zeros((0, 2)))
    ids = np.arange(1, n + 1)
    counts = ndimage.sum_labels(fg, labels, ids).astype(int)
    centroids = np.array(ndimage.center_of_mass(fg, labels, ids), dtype=float).reshape(n, 2)
    return LabeledComponents(labels, counts, centroids)


def keep_largest(mask, connectivity: int = 8) -> np.ndarray:
    """Keep only the component with the most pixels (lowest id on ties)."""
    comp = components(mask, connectivity)
    if comp.n == 0:
        return np.zeros_like(comp.labels, dtype=np.uint8)
    best = int(np.argmax(comp.counts)) + 1
    return (comp.labels == best).astype(np.uint8)


def lv_center(pred_stack, fraction: float = CENTER_FRACTION) -> tuple[float, float]:
    """Centroid of the hottest pixels of the summed prediction heatmap.

    ``pred_stack`` is any ``[..., H, W]`` stack of binary masks belonging to
    one patient. Pixels at or above ``fraction`` of the heatmap maximum count.
    """
    stack = np.asarray(pred_stack)
    if stack.ndim < 2 or stack.size == 0:
        raise ValidationError("need at least one mask")
    heat = stack.reshape((-1,) + stack.shape[-2:]).sum(axis=0, dtype=np.int64)
    peak = heat.max()
    if peak == 0:
        raise NoSignal("every predicted mask is blank")
    rows, cols = np.nonzero(heat >= fraction * peak)
    return float(rows.mean()), float(cols.mean())


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def filter_by_center(mask, center, connectivity: int = 8) -> np.ndarray:
    """Keep the component containing ``center``; blank if the centre is background."""
    comp = components(mask, connectivity)
    r, c = _round_half_up(center[0]), _round_half_up(center[1])
    rows, cols = comp.labels.shape
    if not (0 <= r < rows and 0 <= c < cols):
        raise ValidationError(f"center {center} lies outside the {rows}x{cols} mask")
    k = comp.labels[r, c]
    if k == 0:
        return np.zeros((rows, cols), dtype=np.uint8)
    return (comp.labels == k).astype(np.uint8)


def filter_record(masks, method: str = "center", connectivity: int = 8,
                  fraction: float = CENTER_FRACTION) -> np.ndarray:
    """Filter every mask of a ``[..., H, W]`` patient record.

    With ``method="center"`` a record whose masks are all blank is returned
    unchanged.
    """
    masks = np.asarray(masks)
    flat = masks.reshape((-1,) + masks.shape[-2:])
    if method == "largest":
        out = [keep_largest(m, connectivity) for m in flat]
    elif method == "center":
        try:
            center = lv_center(flat, fraction)
        except NoSignal:
            return masks.astype(np.uint8)
        out = [filter_by_center(m, center, connectivity) for m in flat]
    else:
        raise ValidationError(f"unknown post-processing method {method!r}")
    return np.stack(out).reshape(masks.shape).astype(np.uint8)
