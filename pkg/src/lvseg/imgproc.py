"""Per-image preprocessing: orientation, resampling, cropping, CLAHE, normalization.

All functions take and return 2-D numpy arrays and never modify their input.
Geometric steps accept a ``mask`` counterpart that receives the same transform
with nearest-neighbour sampling so it stays binary.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateImageWarning, NonPositiveSpacing, ValidationError
from .types import ImageMeta, PhaseEncoding, check_iop


class Method(str, enum.Enum):
    BASELINE = "baseline"
    M1T0 = "m1t0"
    M1T1 = "m1t1"
    M1T2 = "m1t2"
    M2T0 = "m2t0"
    M2T1 = "m2t1"
    M2T2 = "m2t2"


class Norm(str, enum.Enum):
    MINMAX = "minmax"
    ZSCORE = "zscore"
    NONE = "none"


@dataclass(frozen=True)
class PreprocessRecipe:
    method: Method = Method.M2T2
    crop_size: int = 176
    clahe_clip: float = 2.0
    clahe_grid: tuple = (1, 1)
    intensity_norm: Norm = Norm.MINMAX
    target_spacing: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "intensity_norm", Norm(self.intensity_norm))
        object.__setattr__(self, "clahe_grid", tuple(int(g) for g in self.clahe_grid))
        if self.crop_size <= 0:
            raise ValidationError("crop_size must be positive")
        if self.clahe_clip < 0:
            raise ValidationError("clahe_clip must be non-negative")
        if len(self.clahe_grid) != 2 or min(self.clahe_grid) < 1:
            raise ValidationError("clahe_grid must be two positive integers")
        if self.target_spacing <= 0:
            raise NonPositiveSpacing("target_spacing must be positive")

    def check_unet_compatible(self, divisor: int = 16):
        if self.crop_size % divisor:
            raise ValidationError(f"crop_size {self.crop_size} is not divisible by {divisor}")
        return self


# -- resampling --------------------------------------------------------------

def _axis_coords(n_in: int, spacing: float, target: float):
    n_out = max(1, int(round(n_in * spacing / target)))
    src = (np.arange(n_out) + 0.5) * (target / spacing) - 0.5
    return n_out, src


def _lerp_axis(img: np.ndarray, src: np.ndarray, axis: int) -> np.ndarray:
    n = img.shape[axis]
    src = np.clip(src, 0, n - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    t = src - i0
    a = np.take(img, i0, axis=axis)
    b = np.take(img, i1, axis=axis)
    shape = [1, 1]
    shape[axis] = -1
    # a + t*(b - a) reproduces constants exactly
    return a + t.reshape(shape) * (b - a)


def resample(img, spacing_row: float, spacing_col: float, target_spacing: float = 1.0,
             mode: str = "both", mask=None):
    """Bilinearly rescale ``img`` to ``target_spacing`` mm per pixel.

    ``mode="first_spacing"`` uses ``spacing_row`` for both axes. Returns
    ``(image, (rows, cols))``, or ``(image, mask, (rows, cols))`` when a mask
    is given (masks are resampled nearest-neighbour).
    """
    if spacing_row <= 0 or spacing_col <= 0 or target_spacing <= 0:
        raise NonPositiveSpacing("pixel spacings must be positive")
    if mode == "first_spacing":
        spacing_col = spacing_row
    elif mode != "both":
        raise ValidationError(f"unknown resample mode {mode!r}")
    img = np.asarray(img, dtype=float)
    rows, src_r = _axis_coords(img.shape[0], spacing_row, target_spacing)
    cols, src_c = _axis_coords(img.shape[1], spacing_col, target_spacing)
    out = _lerp_axis(_lerp_axis(img, src_r, 0), src_c, 1)
    if mask is None:
        return out, (rows, cols)
    mask = np.asarray(mask)
    ir = np.clip(np.floor(src_r + 0.5).astype(int), 0, mask.shape[0] - 1)
    ic = np.clip(np.floor(src_c + 0.5).astype(int), 0, mask.shape[1] - 1)
    return out, mask[np.ix_(ir, ic)], (rows, cols)


def center_crop_pad(img, size: int):
    """Crop (or zero-pad) each axis around the centre to ``size`` pixels.

    Cropping removes ``(dim - size) // 2`` pixels from the leading edge;
    padding puts ``(size - dim) // 2`` zeros on the leading edge and the rest
    on the trailing edge.
    """
    if size <= 0:
        raise ValidationError("crop size must be positive")
    img = np.asarray(img)
    out = img
    for axis in (0, 1):
        n = out.shape[axis]
        if n > size:
            lead = (n - size) // 2
            out = np.take(out, np.arange(lead, lead + size), axis=axis)
        elif n < size:
            lead = (size - n) // 2
            pad = [(0, 0), (0, 0)]
            pad[axis] = (lead, size - n - lead)
            out = np.pad(out, pad)
    return out


# -- orientation ---------------------------------------------------------------

def orient_row_major(img, phase_encoding):
    """Transpose column-phase-encoded images; leave Row/Unknown untouched."""
    img = np.asarray(img)
    if PhaseEncoding(phase_encoding) == PhaseEncoding.COL:
        return img.T.copy()
    return img


def rotate180(img):
    return np.asarray(img)[::-1, ::-1].copy()


def rotate(img, angle_deg: float, order: int = 1):
    """Rotate about the image centre with zero fill.

    Output pixel ``(r, c)`` samples the input at the centre-relative offset
    ``(dx, dy) = (c - cc, r - cr)`` rotated by ``angle_deg``, so an angle of
    90 equals ``np.rot90(img, -1)`` on square images.
    """
    img = np.asarray(img)
    if angle_deg % 360 == 0:
        return img.copy()
    theta = math.radians(angle_deg)
    cos, sin = math.cos(theta), math.sin(theta)
    rows, cols = img.shape
    cr, cc = (rows - 1) / 2.0, (cols - 1) / 2.0
    rr, cc_ = np.mgrid[0:rows, 0:cols].astype(float)
    dy, dx = rr - cr, cc_ - cc
    src_x = cos * dx + sin * dy + cc
    src_y = -sin * dx + cos * dy + cr
    coords = np.stack([src_y, src_x])
    snapped = np.round(coords)
    coords = np.where(np.abs(coords - snapped) < 1e-9, snapped, coords)
    src = img.astype(float) if order else img
    out = ndimage.map_coordinates(src, coords, order=order, mode="constant", cval=0.0)
    return out.astype(img.dtype) if order == 0 else out


def iop_angle(iop) -> float:
    """In-plane angle (degrees) of the row direction cosine from patient +x."""
    iop = check_iop(iop)
    return math.degrees(math.atan2(iop[1], iop[0]))


def orient_common_vector(img, iop, mask=None):
    """Rotate so the image row direction lines up with patient +x."""
    angle = iop_angle(iop)
    out = rotate(img, angle)
    if mask is None:
        return out
    return out, rotate(mask, angle, order=0)


# -- contrast & intensity ------------------------------------------------------

def _bit_levels(img: np.ndarray) -> int:
    top = max(float(np.max(img)), 1.0) if img.size else 1.0
    return 2 ** max(1, math.ceil(math.log2(top + 1)))


def _tile_edges(n: int, k: int) -> np.ndarray:
    return np.round(np.linspace(0, n, k + 1)).astype(int)


def clahe_luts(levels_img: np.ndarray, n_levels: int, clip: float, grid) -> np.ndarray:
    """Per-tile lookup tables, shape ``(tiles_y, tiles_x, n_levels)``."""
    ty, tx = grid
    re, ce = _tile_edges(levels_img.shape[0], ty), _tile_edges(levels_img.shape[1], tx)
    luts = np.empty((ty, tx, n_levels))
    identity = np.arange(n_levels, dtype=float)
    for i in range(ty):
        for j in range(tx):
            tile = levels_img[re[i]:re[i + 1], ce[j]:ce[j + 1]].ravel()
            if tile.size == 0:
                luts[i, j] = identity
                continue
            hist = np.bincount(tile, minlength=n_levels).astype(float)
            if clip > 0:
                limit = clip * tile.size / n_levels
                excess = np.clip(hist - limit, 0, None).sum()
                hist = np.minimum(hist, limit) + excess / n_levels
            cdf = np.cumsum(hist)
            lo = tile.min()
            cdf_min, total = cdf[lo], cdf[-1]
            if total - cdf_min <= 0:
                luts[i, j] = identity
                continue
            luts[i, j] = np.clip((cdf - cdf_min) / (total - cdf_min), 0.0, 1.0) * (n_levels - 1)
    return luts


def clahe(img, clip: float = 2.0, grid=(1, 1), n_levels: int | None = None):
    """Contrast-limited adaptive histogram equalization.

    Intensities are rounded to integer levels in ``[0, n_levels)``;
    ``n_levels`` defaults to the smallest power of two covering the image
    maximum, so a 12-bit image maps onto ``[0, 4095]``. ``clip`` is relative to
    the uniform bin height; 0 disables clipping. Tile mappings are blended
    bilinearly between tile centres.
    """
    if clip < 0:
        raise ValidationError("clip must be non-negative")
    ty, tx = int(grid[0]), int(grid[1])
    if ty < 1 or tx < 1:
        raise ValidationError("grid must be at least (1, 1)")
    img = np.asarray(img, dtype=float)
    if n_levels is None:
        n_levels = _bit_levels(img)
    levels = np.clip(np.rint(img), 0, n_levels - 1).astype(np.int64)
    luts = clahe_luts(levels, n_levels, clip, (ty, tx))
    if ty == tx == 1:
        return luts[0, 0][levels]

    def blend_index(n, k):
        edges = _tile_edges(n, k)
        centers = (edges[:-1] + edges[1:] - 1) / 2.0
        f = np.interp(np.arange(n), centers, np.arange(k))
        i0 = np.floor(f).astype(int)
        return i0, np.minimum(i0 + 1, k - 1), f - i0

    r0, r1, wr = blend_index(img.shape[0], ty)
    c0, c1, wc = blend_index(img.shape[1], tx)
    R0, C0 = np.meshgrid(r0, c0, indexing="ij")
    R1, C1 = np.meshgrid(r1, c1, indexing="ij")
    WR, WC = np.meshgrid(wr, wc, indexing="ij")
    top = (1 - WC) * luts[R0, C0, levels] + WC * luts[R0, C1, levels]
    bottom = (1 - WC) * luts[R1, C0, levels] + WC * luts[R1, C1, levels]
    return (1 - WR) * top + WR * bottom


def normalize_intensity(img, mode="minmax"):
    """Min-max or z-score normalization (population std).

    A constant image cannot be normalized; it comes back as zeros with a
    :class:`DegenerateImageWarning`.
    """
    mode = Norm(mode)
    img = np.asarray(img, dtype=float)
    if mode == Norm.NONE:
        return img.copy()
    if mode == Norm.MINMAX:
        lo, hi = img.min(), img.max()
        if hi > lo:
            return (img - lo) / (hi - lo)
    else:
        std = img.std()
        if std > 0:
            return (img - img.mean()) / std
    warnings.warn("constant image cannot be normalized; returning zeros", DegenerateImageWarning,
                  stacklevel=2)
    return np.zeros_like(img)


# -- recipes -------------------------------------------------------------------

_STEPS = {
    Method.BASELINE: ("resample", "crop"),
    Method.M1T0: ("row_major", "resample_first", "crop", "clahe"),
    Method.M1T1: ("row_major", "resample", "crop", "clahe"),
    Method.M1T2: ("resample", "crop", "clahe"),
    Method.M2T0: ("common_vector", "crop"),
    Method.M2T1: ("common_vector", "resample", "crop"),
    Method.M2T2: ("resample", "crop"),
}


def recipe_steps(recipe: PreprocessRecipe) -> tuple:
    steps = _STEPS[recipe.method]
    if recipe.method != Method.BASELINE and recipe.intensity_norm != Norm.NONE:
        steps += ("normalize",)
    return steps


def preprocess_with_mask(img, meta: ImageMeta, recipe: PreprocessRecipe, mask=None):
    """Run a recipe on an image (and its mask). Returns ``(image, mask, meta)``.

    The returned meta carries the new pixel spacing and size; position and
    orientation tags are left as acquired.
    """
    img = np.asarray(img, dtype=float)
    sp_r, sp_c = meta.pixel_spacing_row, meta.pixel_spacing_col
    phase = meta.phase_encoding
    for step in recipe_steps(recipe):
        if step == "row_major":
            if phase == PhaseEncoding.COL:
                img = orient_row_major(img, phase)
                mask = None if mask is None else orient_row_major(mask, phase)
                sp_r, sp_c = sp_c, sp_r
                phase = PhaseEncoding.ROW
        elif step in ("resample", "resample_first"):
            mode = "first_spacing" if step == "resample_first" else "both"
            if mask is None:
                img, _ = resample(img, sp_r, sp_c, recipe.target_spacing, mode)
            else:
                img, mask, _ = resample(img, sp_r, sp_c, recipe.target_spacing, mode, mask=mask)
            sp_r = sp_c = recipe.target_spacing
        elif step == "common_vector":
            if mask is None:
                img = orient_common_vector(img, meta.iop)
            else:
                img, mask = orient_common_vector(img, meta.iop, mask=mask)
        elif step == "crop":
            img = center_crop_pad(img, recipe.crop_size)
            mask = None if mask is None else center_crop_pad(mask, recipe.crop_size)
        elif step == "clahe":
            img = clahe(img, recipe.clahe_clip, recipe.clahe_grid)
        elif step == "normalize":
            img = normalize_intensity(img, recipe.intensity_norm)
    out_meta = meta.replace(pixel_spacing_row=sp_r, pixel_spacing_col=sp_c,
                            rows=img.shape[0], cols=img.shape[1], phase_encoding=phase)
    return img, mask, out_meta


def preprocess(img, meta: ImageMeta, recipe: PreprocessRecipe):
    """Apply one of the Baseline / Method 1 / Method 2 recipes to an image."""
    return preprocess_with_mask(img, meta, recipe)[0]
