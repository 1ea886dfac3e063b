"""Cardiac MRI left-ventricle segmentation and volumetry."""
from .errors import DataError, LVSegError, ValidationError
from .estimators import ContourFilter, Preprocessor, RoiDetector, UNetSegmenter, VolumeEstimator
from .types import ContourMask, ImageMeta, ImageStack, RoiRect, VolumeResult

__version__ = "0.1.0"

__all__ = [
    "ContourFilter",
    "ContourMask",
    "DataError",
    "ImageMeta",
    "ImageStack",
    "LVSegError",
    "Preprocessor",
    "RoiDetector",
    "RoiRect",
    "UNetSegmenter",
    "ValidationError",
    "VolumeEstimator",
    "VolumeResult",
]
