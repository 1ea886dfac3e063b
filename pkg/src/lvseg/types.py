"""Core data records shared across the pipeline."""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidIop, ValidationError


class PhaseEncoding(str, enum.Enum):
    ROW = "Row"
    COL = "Col"
    UNKNOWN = "Unknown"


class Sex(str, enum.Enum):
    M = "M"
    F = "F"
    UNKNOWN = "Unknown"


class MaskSource(str, enum.Enum):
    GROUND_TRUTH = "GroundTruth"
    PREDICTED = "Predicted"


def check_iop(iop) -> tuple[float, ...]:
    iop = tuple(float(v) for v in iop)
    if len(iop) != 6:
        raise InvalidIop(f"ImageOrientationPatient needs 6 values, got {len(iop)}")
    for half in (iop[:3], iop[3:]):
        if abs(math.sqrt(sum(v * v for v in half)) - 1.0) > 1e-3:
            raise InvalidIop(f"direction cosine {half} is not unit length")
    return iop


@dataclass
class ImageMeta:
    pixel_spacing_row: float
    pixel_spacing_col: float
    rows: int
    cols: int
    ipp: tuple = (0.0, 0.0, 0.0)
    iop: tuple = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    phase_encoding: PhaseEncoding = PhaseEncoding.UNKNOWN
    slice_location_raw: float | None = None
    acquisition_index: int = 0
    instance_number: int | None = None
    patient_age: int | None = None
    patient_sex: Sex = Sex.UNKNOWN

    def __post_init__(self):
        self.phase_encoding = PhaseEncoding(self.phase_encoding)
        self.patient_sex = Sex(self.patient_sex)
        self.ipp = tuple(float(v) for v in self.ipp)
        self.iop = tuple(float(v) for v in self.iop)
        if not (self.pixel_spacing_row > 0 and self.pixel_spacing_col > 0):
            raise ValidationError("pixel spacings must be positive")
        if self.rows <= 0 or self.cols <= 0:
            raise ValidationError("rows and cols must be positive")
        if len(self.ipp) != 3:
            raise ValidationError("ImagePositionPatient needs 3 values")
        check_iop(self.iop)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phase_encoding"] = self.phase_encoding.value
        d["patient_sex"] = self.patient_sex.value
        d["ipp"] = list(self.ipp)
        d["iop"] = list(self.iop)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImageMeta":
        return cls(**d)

    def replace(self, **changes) -> "ImageMeta":
        d = asdict(self)
        d.update(changes)
        return ImageMeta(**d)


@dataclass
class ImageStack:
    """One patient record: ``data[slice, frame, row, col]``.

    ``meta[s][f]`` holds the metadata of each image. ``masks``, when present,
    is a binary array with the same shape as ``data``.
    """

    patient_id: str
    data: np.ndarray
    meta: list[list[ImageMeta]]
    masks: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 4:
            raise ValidationError(f"ImageStack data must be 4-D, got shape {self.data.shape}")
        n_slices, n_frames = self.data.shape[:2]
        if n_slices < 1 or n_frames < 1:
            raise ValidationError("ImageStack needs at least one slice and one frame")
        if len(self.meta) != n_slices or any(len(m) != n_frames for m in self.meta):
            raise ValidationError("meta must hold one ImageMeta per (slice, frame)")
        if self.masks is not None:
            self.masks = np.asarray(self.masks)
            if self.masks.shape != self.data.shape:
                raise ValidationError("masks must have the same shape as data")

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def slice_meta(self, s: int) -> ImageMeta:
        return self.meta[s][0]


@dataclass
class ContourMask:
    data: np.ndarray
    source: MaskSource = MaskSource.GROUND_TRUTH

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValidationError("ContourMask must be 2-D")
        if not np.isin(self.data, (0, 1)).all():
            raise ValidationError("ContourMask values must be 0 or 1")
        self.data = self.data.astype(np.uint8)
        self.source = MaskSource(self.source)


@dataclass(frozen=True)
class RoiRect:
    """Half-open pixel rectangle ``[row_min, row_max) x [col_min, col_max)``."""

    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def __post_init__(self):
        if not (self.row_min < self.row_max and self.col_min < self.col_max):
            raise ValidationError(f"empty rectangle {self}")
        if self.row_min < 0 or self.col_min < 0:
            raise ValidationError(f"negative rectangle bound {self}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Circle:
    center: tuple[int, int]
    radius: int
    accumulator_score: float


@dataclass
class VolumeResult:
    esv_ml: float
    edv_ml: float
    ef: float | None
    flags: set = field(default_factory=set)
    n_slices: int | None = None

    def __post_init__(self):
        self.flags = set(self.flags)

    @staticmethod
    def ejection_fraction(esv_ml: float, edv_ml: float) -> float | None:
        return (edv_ml - esv_ml) / edv_ml if edv_ml > 0 else None
