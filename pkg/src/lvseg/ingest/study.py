"""Canonical on-disk study format.

A study directory holds ``manifest.json`` plus one raw pixel file per slice
(and optionally one mask file per slice). Pixel files are row-major with the
frame index outermost: ``frames x rows x cols`` values of the manifest's
``pixel_encoding`` (``<u2`` by default, ``<f4`` for normalized intermediate
studies). Mask files are ``frames x rows x cols`` unsigned bytes holding 0/1.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import ManifestMismatch, MissingFile, StudyIOError, ValidationError
from ..types import ImageMeta, ImageStack
from .dicom import parse_dicom, patient_id_of
from .nifti import affine, parse_nifti_full

MANIFEST = "manifest.json"
FORMAT_VERSION = 1
ENCODINGS = {"<u2": "little-endian unsigned 16-bit, row-major",
             "<f4": "little-endian IEEE-754 32-bit float, row-major"}


def _encoding_for(data: np.ndarray) -> str:
    if data.dtype.kind == "f":
        return "<f4"
    if data.size and (data.min() < 0 or data.max() > 0xFFFF):
        raise ValidationError("integer intensities must fit unsigned 16-bit")
    return "<u2"


def store_study(stack: ImageStack, directory, masks: np.ndarray | None = None,
                encoding: str | None = None) -> dict:
    """Write ``stack`` under ``directory`` and return the manifest dict.

    ``masks`` defaults to ``stack.masks``.
    """
    directory = Path(directory)
    masks = stack.masks if masks is None else np.asarray(masks)
    encoding = encoding or _encoding_for(stack.data)
    if encoding not in ENCODINGS:
        raise ValidationError(f"unknown pixel encoding {encoding!r}")
    if masks is not None and masks.shape != stack.data.shape:
        raise ValidationError("masks must match the stack shape")
    try:
        directory.mkdir(parents=True, exist_ok=True)
        slices = []
        for s in range(stack.n_slices):
            rows, cols = stack.data.shape[2:]
            entry = {
                "index": s,
                "frames": stack.n_frames,
                "rows": rows,
                "cols": cols,
                "pixel_file": f"slice_{s:03d}.raw",
                "meta": [m.to_dict() for m in stack.meta[s]],
            }
            (directory / entry["pixel_file"]).write_bytes(
                np.ascontiguousarray(stack.data[s]).astype(encoding).tobytes())
            if masks is not None:
                entry["mask_file"] = f"slice_{s:03d}_mask.raw"
                (directory / entry["mask_file"]).write_bytes(
                    (np.asarray(masks[s]) != 0).astype(np.uint8).tobytes())
            slices.append(entry)
        manifest = {
            "format_version": FORMAT_VERSION,
            "patient_id": stack.patient_id,
            "pixel_encoding": {"dtype": encoding, "description": ENCODINGS[encoding]},
            "slices": slices,
        }
        tmp = directory / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
        os.replace(tmp, directory / MANIFEST)
    except OSError as exc:
        raise StudyIOError(f"cannot write study to {directory}: {exc}") from exc
    return manifest


def _read_raw(path: Path, dtype: str, shape) -> np.ndarray:
    if not path.exists():
        raise MissingFile(f"{path} is referenced by the manifest but missing")
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise ManifestMismatch(f"{path.name}: {len(raw)} bytes, manifest implies {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def load_study(directory) -> ImageStack:
    """Inverse of :func:`store_study`."""
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise MissingFile(f"no {MANIFEST} in {directory}")
    manifest = json.loads(path.read_text())
    encoding = manifest["pixel_encoding"]["dtype"]
    if encoding not in ENCODINGS:
        raise ManifestMismatch(f"unknown pixel encoding {encoding!r}")
    slices = sorted(manifest["slices"], key=lambda e: e["index"])
    if not slices:
        raise ManifestMismatch("manifest lists no slices")
    shapes = {(e["frames"], e["rows"], e["cols"]) for e in slices}
    if len(shapes) != 1:
        raise ManifestMismatch(f"slices disagree on frames/rows/cols: {sorted(shapes)}")
    data, metas, masks = [], [], []
    has_masks = all("mask_file" in e for e in slices)
    for e in slices:
        shape = (e["frames"], e["rows"], e["cols"])
        data.append(_read_raw(directory / e["pixel_file"], encoding, shape))
        metas.append([ImageMeta.from_dict(m) for m in e["meta"]])
        if len(metas[-1]) != e["frames"]:
            raise ManifestMismatch(f"slice {e['index']}: {len(metas[-1])} metas for {e['frames']} frames")
        if has_masks:
            masks.append(_read_raw(directory / e["mask_file"], "u1", shape))
    native = np.dtype(encoding).newbyteorder("=")
    return ImageStack(
        patient_id=manifest["patient_id"],
        data=np.stack(data).astype(native),
        meta=metas,
        masks=np.stack(masks) if has_masks else None,
    )


# -- building stacks from source formats ---------------------------------------

def stack_from_dicom_files(blobs, patient_id: str | None = None) -> ImageStack:
    """Group single-frame DICOM files into an ImageStack.

    Images are grouped into slices by (acquisition index, slice location);
    frames within a slice are ordered by InstanceNumber. Retakes therefore
    appear as separate slices at the same location.
    """
    from ..volume import slice_location

    records = []
    for blob in blobs:
        meta, pixels = parse_dicom(blob)
        if patient_id is None:
            patient_id = patient_id_of(blob)
        loc = round(slice_location(meta.ipp, meta.iop), 3)
        records.append((meta.acquisition_index, loc, meta.instance_number or 0, meta, pixels))
    if not records:
        raise MissingFile("no DICOM files given")
    groups: dict = {}
    for acq, loc, inst, meta, pixels in records:
        groups.setdefault((loc, acq), []).append((inst, meta, pixels))
    frame_counts = {len(v) for v in groups.values()}
    if len(frame_counts) != 1:
        raise ManifestMismatch(f"slices have differing frame counts {sorted(frame_counts)}")
    shapes = {p.shape for _, _, _, _, p in records}
    if len(shapes) != 1:
        raise ManifestMismatch(f"images have differing shapes {sorted(shapes)}")
    data, metas = [], []
    for key in sorted(groups):
        frames = sorted(groups[key], key=lambda t: t[0])
        data.append(np.stack([p for _, _, p in frames]))
        metas.append([m for _, m, _ in frames])
    arr = np.stack(data)
    if arr.dtype.kind == "i":
        if arr.min() < 0:
            raise ValidationError("negative intensities cannot be stored as unsigned 16-bit")
        arr = arr.astype(np.uint16)
    return ImageStack(patient_id or "anon", arr, metas)


def stack_from_nifti(blob: bytes, patient_id: str, label_blob: bytes | None = None,
                     lv_class: int | None = None, age=None, sex="Unknown") -> ImageStack:
    """Build an ImageStack (and optional LV masks) from a 4-D NIfTI volume.

    Geometry comes from the header affine, converted from RAS to the LPS
    convention DICOM metadata uses.
    """
    array, hdr = parse_nifti_full(blob)
    aff = affine(hdr)
    lps = np.diag([-1.0, -1.0, 1.0])
    col_dir = lps @ aff[:3, 0]
    row_dir = lps @ aff[:3, 1]
    sp_col = float(np.linalg.norm(col_dir)) or 1.0
    sp_row = float(np.linalg.norm(row_dir)) or 1.0
    iop = tuple(np.concatenate([col_dir / sp_col, row_dir / sp_row]).tolist())
    n_slices, n_frames, rows, cols = array.shape
    metas = []
    for k in range(n_slices):
        ipp = tuple((lps @ (aff[:3, :3] @ np.array([0.0, 0.0, k]) + aff[:3, 3])).tolist())
        m = ImageMeta(sp_row, sp_col, rows, cols, ipp=ipp, iop=iop, acquisition_index=0,
                      patient_age=age, patient_sex=sex)
        metas.append([m.replace(instance_number=f + 1) for f in range(n_frames)])
    if array.dtype.kind == "f":
        array = np.rint(array)
    if array.min() < 0 or array.max() > 0xFFFF:
        raise ValidationError("NIfTI intensities do not fit unsigned 16-bit")
    masks = None
    if label_blob is not None:
        from .contours import simplify_acdc_label

        if lv_class is None:
            raise ValidationError("lv_class is required when a label volume is given")
        labels, _ = parse_nifti_full(label_blob)
        if labels.shape[0] != n_slices or labels.shape[2:] != (rows, cols):
            raise ManifestMismatch("label volume does not match the image volume")
        masks = np.zeros(array.shape, dtype=np.uint8)
        # label files usually hold one frame (ED or ES); broadcast over frames only if they match
        if labels.shape[1] == n_frames:
            for s in range(n_slices):
                for f in range(n_frames):
                    masks[s, f] = simplify_acdc_label(labels[s, f], lv_class).data
        elif labels.shape[1] == 1:
            for s in range(n_slices):
                masks[s, :] = simplify_acdc_label(labels[s, 0], lv_class).data
        else:
            raise ManifestMismatch("label volume frame count does not match the image volume")
    return ImageStack(patient_id, array.astype(np.uint16), metas, masks)
