"""Training-set assembly: affine augmentation and patient-level splits."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from ..errors import TooFewPatients, ValidationError


def affine_pair(image, mask, angle_deg=0.0, shift=(0.0, 0.0), zoom=1.0, flip=False):
    """Apply one rotation/shift/zoom/flip to an image and its mask.

    ``shift`` is a fraction of (height, width). The image is sampled bilinearly,
    the mask nearest-neighbour, both with zero fill. The identity parameters
    return copies of the inputs.
    """
    image = np.asarray(image, dtype=float)
    mask = np.asarray(mask)
    if angle_deg == 0 and shift[0] == 0 and shift[1] == 0 and zoom == 1:
        out_i, out_m = image.copy(), mask.copy()
    else:
        rows, cols = image.shape
        center = np.array([(rows - 1) / 2.0, (cols - 1) / 2.0])
        t = math.radians(angle_deg)
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        # output -> input mapping: undo zoom and rotation about the centre, then the shift
        matrix = rot.T / zoom
        offset_px = np.array([shift[0] * rows, shift[1] * cols])
        offset = center - matrix @ (center + offset_px)
        out_i = ndimage.affine_transform(image, matrix, offset, order=1, mode="constant", cval=0.0)
        out_m = ndimage.affine_transform(mask, matrix, offset, order=0, mode="constant", cval=0)
    if flip:
        out_i, out_m = out_i[:, ::-1].copy(), out_m[:, ::-1].copy()
    return out_i, out_m


def sample_params(rng: np.random.Generator, rotation=90.0, shift=0.05, zoom=(0.95, 1.05),
                  flip=False) -> dict:
    return {
        "angle_deg": rng.uniform(0.0, rotation),
        "shift": (rng.uniform(0.0, shift), rng.uniform(0.0, shift)),
        "zoom": rng.uniform(*zoom) if zoom else 1.0,
        "flip": bool(flip and rng.random() < 0.5),
    }


def augment(pairs, factor: int = 10, seed: int = 0, rotation=90.0, shift=0.05,
            zoom=(0.95, 1.05), flip=False) -> list:
    """Return the originals followed by ``factor`` random variants of each.

    Rotation is drawn from U(0, ``rotation``) degrees, shift from U(0, ``shift``)
    of the image size per axis, zoom from U(*``zoom``) (``None`` disables it)
    and a horizontal flip with probability 1/2 when ``flip`` is set.
    """
    if factor < 0:
        raise ValidationError("augmentation factor must be non-negative")
    pairs = list(pairs)
    rng = np.random.default_rng(seed)
    out = [(np.asarray(i), np.asarray(m)) for i, m in pairs]
    for _ in range(factor):
        for image, mask in pairs:
            out.append(affine_pair(image, mask, **sample_params(rng, rotation, shift, zoom, flip)))
    return out


def split_patients(patient_ids, seed: int = 0):
    """Shuffle patients and split them into (train, val, test).

    test = floor(0.1 N) (at least 1); val = floor(0.2 (N - test)) (at least 1);
    the rest train.
    """
    ids = list(patient_ids)
    if len(set(ids)) != len(ids):
        raise ValidationError("patient ids must be unique")
    n = len(ids)
    if n < 3:
        raise TooFewPatients(f"need at least 3 patients, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    n_test = max(1, (n * 10) // 100)
    n_val = max(1, ((n - n_test) * 20) // 100)
    test = shuffled[:n_test]
    val = shuffled[n_test:n_test + n_val]
    train = shuffled[n_test + n_val:]
    return train, val, test
