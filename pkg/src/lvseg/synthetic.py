"""Synthetic images, phantoms and records for tests, demos and smoke runs."""
from __future__ import annotations

import math

import numpy as np

from .types import ImageMeta, ImageStack


def disc(shape, center, radius) -> np.ndarray:
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return ((yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2).astype(np.uint8)


def ring(shape, center, radius, width: float = 1.0) -> np.ndarray:
    """Raster circle: pixels whose centre lies within ``width/2`` of the radius."""
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    d = np.hypot(yy - center[0], xx - center[1])
    return (np.abs(d - radius) < width / 2).astype(np.uint8)


def disc_dataset(n: int = 200, size: int = 64, seed: int = 0, r_range=(6, 18), noise=0.15,
                 blank_frac: float = 0.0):
    """Noisy bright discs on a darker textured background with their masks.

    Returns ``(images, masks)`` shaped ``[n][size][size]``; images in [0, 1].
    """
    rng = np.random.default_rng(seed)
    images = np.empty((n, size, size), dtype=np.float32)
    masks = np.zeros((n, size, size), dtype=np.uint8)
    yy, xx = np.mgrid[:size, :size]
    for i in range(n):
        bg = rng.uniform(0.1, 0.3)
        img = np.full((size, size), bg)
        # a smooth distractor gradient
        angle = rng.uniform(0, 2 * math.pi)
        img += 0.1 * ((math.cos(angle) * xx + math.sin(angle) * yy) / size)
        if rng.random() >= blank_frac:
            r = rng.uniform(*r_range)
            cy, cx = rng.uniform(r + 1, size - r - 1, size=2)
            m = ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)
            masks[i] = m
            img[m] = rng.uniform(0.6, 0.9)
        img += rng.normal(0, noise, size=img.shape)
        images[i] = np.clip(img, 0, 1)
    return images, masks


def lv_record(patient_id="phantom", n_slices=10, n_frames=20, size=128, slice_gap=10.0,
              pixel_spacing=1.0, center=None, r_ed=None, r_es=None, intensity=1500,
              background=300, noise=0.0, seed=0, age=None, sex="Unknown"):
    """Beating-ventricle phantom as an ImageStack with ground-truth masks.

    The LV cavity is a solid of revolution along the slice axis; the radius
    at relative height ``h`` in (0, 1) follows ``r_max * sin(pi h)`` between
    the end-diastolic and end-systolic profiles, and the cavity breathes
    sinusoidally over the frames (frame 0 = end diastole).
    """
    rng = np.random.default_rng(seed)
    center = center if center is not None else (size / 2, size / 2)
    r_ed = r_ed if r_ed is not None else size * 0.2
    r_es = r_es if r_es is not None else r_ed * 0.7
    data = np.zeros((n_slices, n_frames, size, size), dtype=np.uint16)
    masks = np.zeros_like(data, dtype=np.uint8)
    metas = []
    yy, xx = np.mgrid[:size, :size]
    dist = np.hypot((yy - center[0]) * pixel_spacing, (xx - center[1]) * pixel_spacing)
    for s in range(n_slices):
        h = (s + 0.5) / n_slices
        meta = ImageMeta(pixel_spacing, pixel_spacing, size, size,
                         ipp=(0.0, 0.0, s * slice_gap), iop=(1, 0, 0, 0, 1, 0),
                         acquisition_index=1, patient_age=age, patient_sex=sex)
        row = []
        for f in range(n_frames):
            phase = 0.5 * (1 + math.cos(2 * math.pi * f / n_frames))  # 1 at ED, 0 at ES
            r = (r_es + (r_ed - r_es) * phase) * math.sin(math.pi * h)
            m = dist <= r
            img = np.full((size, size), float(background))
            img[m] = intensity
            if noise:
                img += rng.normal(0, noise, img.shape)
            data[s, f] = np.clip(np.rint(img), 0, 65535).astype(np.uint16)
            masks[s, f] = m
            row.append(meta.replace(instance_number=f + 1))
        metas.append(row)
    return ImageStack(patient_id, data, metas, masks)


def pulsating_stack(n_slices=3, n_frames=16, size=128, discs=(((64, 64), 20, 8, 1000.0),),
                    background=100.0):
    """``[S][T][H][W]`` array of discs whose radius oscillates over the frames.

    Each disc is ``(center, mean_radius, radius_amplitude, intensity)``.
    """
    data = np.full((n_slices, n_frames, size, size), background)
    yy, xx = np.mgrid[:size, :size]
    for s in range(n_slices):
        for f in range(n_frames):
            for center, r0, amp, inten in discs:
                r = r0 + amp * math.cos(2 * math.pi * f / n_frames)
                data[s, f][(yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= r * r] = inten
    return data


def solid_volume_ml(radius_mm: float, height_mm: float) -> float:
    """Closed-form volume of the ``r * sin(pi z / H)`` solid of revolution."""
    return math.pi * radius_mm ** 2 * height_mm / 2 / 1000


def phantom_cohort(n: int = 8, seed: int = 0, size: int = 128, n_frames: int = 20,
                   slice_gap: float = 10.0):
    """``n`` phantom patients with their analytic ESV/EDV.

    Returns ``(stacks, truth)`` where ``truth`` maps patient id to a dict with
    ``esv_ml``, ``edv_ml`` and ``ef``.
    """
    rng = np.random.default_rng(seed)
    stacks, truth = [], {}
    for i in range(n):
        pid = f"phantom_{i:03d}"
        n_slices = int(rng.integers(8, 13))
        r_ed = float(rng.uniform(18, 30))
        r_es = r_ed * float(rng.uniform(0.5, 0.8))
        sex = "M" if rng.random() < 0.5 else "F"
        age = int(rng.integers(20, 80))
        stacks.append(lv_record(pid, n_slices, n_frames, size, slice_gap, r_ed=r_ed, r_es=r_es,
                                seed=seed + i, age=age, sex=sex))
        height = n_slices * slice_gap
        esv, edv = solid_volume_ml(r_es, height), solid_volume_ml(r_ed, height)
        truth[pid] = {"esv_ml": esv, "edv_ml": edv, "ef": (edv - esv) / edv}
    return stacks, truth
