"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch, ValidationError
from .types import ImageStack


def check_images(x, size: int | None = None, name: str = "X") -> np.ndarray:
    """``[N][H][W]`` finite float32 batch; a single 2-D image becomes N=1."""
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeMismatch(f"{name} must be [N][H][W], got shape {arr.shape}")
    if size is not None and arr.shape[1:] != (size, size):
        raise ShapeMismatch(f"{name} images are {arr.shape[1:]}, expected {(size, size)}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains NaN or infinite values")
    return arr


def check_masks(y, like: np.ndarray | None = None, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim == 2:
        arr = arr[None]
    if like is not None and arr.shape != like.shape:
        raise ShapeMismatch(f"{name} shape {arr.shape} does not match {like.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} must be binary")
    return arr.astype(np.uint8)


def check_stacks(stacks, need_masks: bool = False) -> list[ImageStack]:
    """A list of ImageStack; a bare stack is wrapped."""
    if isinstance(stacks, ImageStack):
        stacks = [stacks]
    stacks = list(stacks)
    for st in stacks:
        if not isinstance(st, ImageStack):
            raise ValidationError(f"expected ImageStack, got {type(st).__name__}")
        if need_masks and st.masks is None:
            raise ValidationError(f"patient {st.patient_id} has no masks")
    return stacks
