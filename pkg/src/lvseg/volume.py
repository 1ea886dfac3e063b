"""End-systolic / end-diastolic volume and ejection fraction from LV masks.

Per slice, the smallest and largest LV area over the cardiac cycle give the
end-systolic and end-diastolic cross-sections. Slices are placed along the
long axis by projecting ImagePositionPatient onto the slice normal, and the
volume between neighbouring slices is integrated with either the
truncated-cone (frustum) rule or its arithmetic-mean simplification.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (DuplicateLocation, LengthMismatch, NonPositiveEDV, NonSquareMask, ShapeMismatch,
                     TooFewSlices, UnknownSex, ValidationError)
from .types import ImageMeta, ImageStack, Sex, VolumeResult, check_iop

RETAKE_TOLERANCE_MM = 1e-3
MIN_SLICES = 5
LOW_ESV_ML = 2.3
LOW_EDV_ML = 5.0


class Flag(str, enum.Enum):
    FALLBACK_FEW_SLICES = "FallbackFewSlices"
    FALLBACK_LOW_ESV = "FallbackLowESV"
    FALLBACK_LOW_EDV = "FallbackLowEDV"
    EDGE_TRIMMED = "EdgeTrimmed"
    ZERO_SLICE_REMOVED = "ZeroSliceRemoved"
    RETAKE_DEDUPED = "RetakeDeduped"


class Mode(str, enum.Enum):
    ARITHMETIC_MEAN = "am"
    TRUNCATED_CONE = "tc"


@dataclass
class SliceRecord:
    slice_id: int
    location_mm: float
    areas: np.ndarray  # mm^2 per frame
    acquisition_index: int = 0

    def __post_init__(self):
        self.areas = np.asarray(self.areas, dtype=float)
        if not math.isfinite(self.location_mm):
            raise ValidationError("slice location must be finite")
        if (self.areas < 0).any():
            raise ValidationError("areas must be non-negative")


def slice_area(mask, pixel_spacing_mm, fraction_form: bool = False) -> float:
    """LV area in mm^2: pixel count times pixel area.

    ``pixel_spacing_mm`` is a scalar or a (row, col) pair. ``fraction_form``
    evaluates the equivalent ``F * (p * I)^2`` expression and needs a square
    mask with square pixels.
    """
    mask = np.asarray(mask)
    if np.ndim(pixel_spacing_mm) == 0:
        p_r = p_c = float(pixel_spacing_mm)
    else:
        p_r, p_c = (float(v) for v in pixel_spacing_mm)
    count = int(np.count_nonzero(mask))
    if fraction_form:
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1] or p_r != p_c:
            raise NonSquareMask("fraction form needs a square mask with square pixels")
        side = mask.shape[0]
        return (count / (side * side)) * (p_r * side) ** 2
    return count * p_r * p_c


def slice_location(ipp, iop) -> float:
    """Position along the slice normal: ``ipp . (row_cosine x col_cosine)``."""
    iop = check_iop(iop)
    normal = np.cross(iop[:3], iop[3:])
    return float(np.dot(np.asarray(ipp, dtype=float), normal))


def select_es_ed_frames(areas) -> tuple[int, int]:
    """(argmin, argmax) of per-frame areas; ties resolve to the first frame."""
    areas = np.asarray(areas, dtype=float)
    if areas.size == 0:
        raise ValidationError("need at least one frame")
    return int(np.argmin(areas)), int(np.argmax(areas))


def dedupe_retakes(slices, tol: float = RETAKE_TOLERANCE_MM) -> list:
    """Keep the most recent acquisition among slices at the same location."""
    kept: list[SliceRecord] = []
    for rec in slices:
        for i, other in enumerate(kept):
            if abs(other.location_mm - rec.location_mm) < tol:
                if rec.acquisition_index >= other.acquisition_index:
                    kept[i] = rec
                break
        else:
            kept.append(rec)
    return kept


def trim_edges(areas) -> list[int]:
    """Indices kept after dropping implausible end slices.

    Slice 0 is dropped if larger than slice 1; the last slice is dropped if
    larger than the one before it. Each end is checked once, first end first,
    and the last-end rule only applies while two slices remain.
    """
    areas = list(areas)
    if len(areas) < 2:
        raise TooFewSlices(f"need at least 2 slices to trim, got {len(areas)}")
    keep = list(range(len(areas)))
    if areas[0] > areas[1]:
        keep.pop(0)
    if len(keep) >= 2 and areas[keep[-1]] > areas[keep[-2]]:
        keep.pop()
    return keep


def remove_zero_slices(slice_areas) -> list[int]:
    """Indices kept after removing interior slices whose every frame is empty.

    ``slice_areas`` holds one per-frame area array per slice, ordered by
    location. End slices are never removed here.
    """
    n = len(slice_areas)
    return [i for i, a in enumerate(slice_areas)
            if i == 0 or i == n - 1 or np.any(np.asarray(a) > 0)]


def integrate(areas, locations, mode="am") -> float:
    """Volume (mm^3) of the stack of cross-sections.

    ``mode="am"`` sums ``(A_i + A_j) h / 2``; ``mode="tc"`` sums the frustum
    ``(A_i + A_j + sqrt(A_i A_j)) h / 3``.
    """
    try:
        mode = Mode(mode)
    except ValueError:
        raise ValidationError(f"unknown integration mode {mode!r}; use 'am' or 'tc'") from None
    areas = np.asarray(areas, dtype=float)
    locations = np.asarray(locations, dtype=float)
    if areas.shape != locations.shape or areas.ndim != 1:
        raise LengthMismatch("areas and locations must be 1-D and equally long")
    if len(areas) < 2:
        raise LengthMismatch("need at least two slices to integrate")
    order = np.argsort(locations, kind="stable")
    a, loc = areas[order], locations[order]
    h = np.diff(loc)
    if (h == 0).any():
        raise DuplicateLocation("two slices share a location")
    a0, a1 = a[:-1], a[1:]
    if mode == Mode.ARITHMETIC_MEAN:
        parts = (a0 + a1) * h / 2.0
    else:
        parts = (a0 + a1 + np.sqrt(a0 * a1)) * h / 3.0
    return float(math.fsum(parts))


def _phase_volume(records: list[SliceRecord], pick, mode, flags: set) -> float:
    """Integrate one phase; ``pick`` maps a slice's per-frame areas to one area."""
    kept = [records[i] for i in remove_zero_slices([r.areas for r in records])]
    if len(kept) < len(records):
        flags.add(Flag.ZERO_SLICE_REMOVED)
    if len(kept) < 2:
        raise TooFewSlices(f"only {len(kept)} usable slice(s)")
    areas = [pick(r.areas) for r in kept]
    idx = trim_edges(areas)
    if len(idx) < len(areas):
        flags.add(Flag.EDGE_TRIMMED)
    if len(idx) < 2:
        raise TooFewSlices(f"only {len(idx)} slice(s) left after edge trimming")
    return integrate([areas[i] for i in idx], [kept[i].location_mm for i in idx], mode)


def _slice_metas(metas, n_slices) -> list[ImageMeta]:
    if isinstance(metas, ImageStack):
        metas = metas.meta
    out = [m[0] if isinstance(m, (list, tuple)) else m for m in metas]
    if len(out) != n_slices:
        raise ShapeMismatch(f"{len(out)} slice metas for {n_slices} slices")
    return out


def slice_records(masks, metas) -> list[SliceRecord]:
    masks = np.asarray(masks)
    if masks.ndim != 4:
        raise ShapeMismatch("masks must be [slice][frame][row][col]")
    records = []
    for s, meta in enumerate(_slice_metas(metas, masks.shape[0])):
        spacing = (meta.pixel_spacing_row, meta.pixel_spacing_col)
        areas = [slice_area(m, spacing) for m in masks[s]]
        records.append(SliceRecord(s, slice_location(meta.ipp, meta.iop), areas,
                                   meta.acquisition_index))
    return records


def patient_volumes(masks, metas, mode="am", edv_masks=None) -> VolumeResult:
    """ESV/EDV (ml) and EF from a patient's binary masks.

    ``masks`` is ``[slice][frame][row][col]``; ``metas`` gives one ImageMeta
    per slice (or per slice and frame). When ``edv_masks`` is given, ESV uses
    ``masks`` and EDV uses ``edv_masks`` (two segmentation models).
    """
    flags: set = set()
    es_all = slice_records(masks, metas)
    ed_all = es_all if edv_masks is None else slice_records(edv_masks, metas)
    es = dedupe_retakes(es_all)
    if len(es) < len(es_all):
        flags.add(Flag.RETAKE_DEDUPED)
    kept_ids = {r.slice_id for r in es}
    ed = [r for r in ed_all if r.slice_id in kept_ids]
    es.sort(key=lambda r: r.location_mm)
    ed.sort(key=lambda r: r.location_mm)
    esv = _phase_volume(es, lambda a: a[select_es_ed_frames(a)[0]], mode, flags) / 1000.0
    edv = _phase_volume(ed, lambda a: a[select_es_ed_frames(a)[1]], mode, flags) / 1000.0
    if edv <= 0:
        raise NonPositiveEDV("end-diastolic volume is zero; ejection fraction undefined")
    result = VolumeResult(esv, edv, VolumeResult.ejection_fraction(esv, edv), flags)
    result.n_slices = len(es)
    return result


def linear_model(age_years, sex) -> tuple[float, float]:
    """Age/sex regression for (ESV, EDV) in ml.

    Coefficients are held in hundredths so integer ages give exact decimals.
    """
    if age_years is None:
        raise UnknownSex("patient age is missing; the regression needs age and sex")
    if age_years < 0:
        raise ValidationError("age must be a non-negative number of years")
    sex = Sex(sex) if not isinstance(sex, Sex) else sex
    x = age_years
    if sex == Sex.M:
        if x < 16:
            return 469 * x / 100, (1080 * x + 900) / 100
        return 75.0, 181.0
    if sex == Sex.F:
        if x < 16:
            return (241 * x + 1500) / 100, (761 * x + 2200) / 100
        return 53.6, 144.0
    raise UnknownSex(f"no regression for sex {sex.value!r}")


def apply_fallbacks(result: VolumeResult | None, n_slices: int, age, sex) -> VolumeResult:
    """Swap in regression volumes for sparse records or implausibly small volumes.

    Fewer than 5 slices replaces both volumes (``result`` may then be None);
    otherwise ESV < 2.3 ml and EDV < 5 ml are replaced independently.
    """
    if n_slices < MIN_SLICES:
        esv, edv = linear_model(age, sex)
        flags = set(result.flags) if result is not None else set()
        flags.add(Flag.FALLBACK_FEW_SLICES)
        return VolumeResult(esv, edv, VolumeResult.ejection_fraction(esv, edv), flags)
    if result is None:
        raise ValidationError("a volume result is required when the record has enough slices")
    esv, edv, flags = result.esv_ml, result.edv_ml, set(result.flags)
    low_esv, low_edv = esv < LOW_ESV_ML, edv < LOW_EDV_ML
    if low_esv or low_edv:
        lin_esv, lin_edv = linear_model(age, sex)
        if low_esv:
            esv = lin_esv
            flags.add(Flag.FALLBACK_LOW_ESV)
        if low_edv:
            edv = lin_edv
            flags.add(Flag.FALLBACK_LOW_EDV)
    return VolumeResult(esv, edv, VolumeResult.ejection_fraction(esv, edv), flags)


def ensemble(masks, mode: str = "majority") -> np.ndarray:
    """Combine k models' outputs for one image.

    ``majority``: binarized inputs, 1 where more than k/2 models vote 1.
    ``average``: probability maps, mean then strictly above 0.5.
    """
    arrays = [np.asarray(m, dtype=float) for m in masks]
    if not arrays or any(a.shape != arrays[0].shape for a in arrays):
        raise ShapeMismatch("need a non-empty list of equally shaped masks")
    stack = np.stack(arrays)
    if stack.ndim < 3:
        raise ShapeMismatch("need a non-empty list of equally shaped masks")
    k = len(stack)
    if mode == "majority":
        return (2 * (stack > 0.5).sum(axis=0) > k).astype(np.uint8)
    if mode == "average":
        return (stack.mean(axis=0) > 0.5).astype(np.uint8)
    raise ValidationError(f"unknown ensemble mode {mode!r}")


def estimate_patient(stack: ImageStack, masks=None, mode="am", fallback: bool = True,
                     edv_masks=None) -> VolumeResult:
    """Volumes for one patient with the fallback rules applied.

    ``masks`` defaults to ``stack.masks``. Records that cannot be integrated
    (too few usable slices, empty end-diastole) fall back to the age/sex
    regression when ``fallback`` is on and raise otherwise.
    """
    masks = stack.masks if masks is None else masks
    if masks is None:
        raise ValidationError(f"patient {stack.patient_id} has no masks")
    meta = stack.slice_meta(0)
    try:
        result = patient_volumes(masks, stack.meta, mode, edv_masks)
    except TooFewSlices:
        if not fallback:
            raise
        return apply_fallbacks(None, 0, meta.patient_age, meta.patient_sex)
    except NonPositiveEDV:
        if not fallback:
            raise
        result = VolumeResult(0.0, 0.0, None)
        result.n_slices = len(dedupe_retakes(slice_records(masks, stack.meta)))
    if not fallback:
        return result
    out = apply_fallbacks(result, result.n_slices, meta.patient_age, meta.patient_sex)
    out.n_slices = result.n_slices
    return out
