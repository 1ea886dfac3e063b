"""NIfTI-1 single-file (``.nii``) reader and writer.

Voxel data is stored with the first header dimension varying fastest. It is
returned as ``[slice][frame][row][col]`` where row = header dim 2, col =
header dim 1, slice = dim 3 and frame = dim 4 (1 for 3-D files), so the
first voxel on disk lands at index ``[0, 0, 0, 0]``.
"""
from __future__ import annotations

import gzip
import struct

import numpy as np

from ..errors import BadMagic, DataError, HeaderDimMismatch, UnsupportedDatatype

HEADER_SIZE = 348

DATATYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_CODES = {np.dtype(v): k for k, v in DATATYPES.items()}


def _endian(raw: bytes) -> str:
    if struct.unpack("<i", raw[:4])[0] == HEADER_SIZE:
        return "<"
    if struct.unpack(">i", raw[:4])[0] == HEADER_SIZE:
        return ">"
    raise DataError("sizeof_hdr is not 348; not a NIfTI-1 header")


def read_header(data: bytes) -> dict:
    """Decode the fields of a NIfTI-1 header the pipeline uses."""
    if len(data) < HEADER_SIZE:
        raise DataError(f"NIfTI header needs {HEADER_SIZE} bytes, got {len(data)}")
    magic = data[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise BadMagic(f"bad NIfTI magic {magic!r}")
    e = _endian(data)
    hdr = {
        "endian": e,
        "dim": struct.unpack_from(e + "8h", data, 40),
        "datatype": struct.unpack_from(e + "h", data, 70)[0],
        "bitpix": struct.unpack_from(e + "h", data, 72)[0],
        "pixdim": struct.unpack_from(e + "8f", data, 76),
        "vox_offset": struct.unpack_from(e + "f", data, 108)[0],
        "scl_slope": struct.unpack_from(e + "f", data, 112)[0],
        "scl_inter": struct.unpack_from(e + "f", data, 116)[0],
        "qform_code": struct.unpack_from(e + "h", data, 252)[0],
        "sform_code": struct.unpack_from(e + "h", data, 254)[0],
        "quatern": struct.unpack_from(e + "6f", data, 256),
        "srow": np.array(struct.unpack_from(e + "12f", data, 280), dtype=float).reshape(3, 4),
        "magic": magic,
    }
    return hdr


def affine(hdr: dict) -> np.ndarray:
    """Voxel (i, j, k) -> RAS+ mm transform from sform, else qform, else pixdim."""
    aff = np.eye(4)
    pixdim = hdr["pixdim"]
    if hdr["sform_code"] > 0:
        aff[:3] = hdr["srow"]
        return aff
    if hdr["qform_code"] > 0:
        b, c, d, qx, qy, qz = hdr["quatern"]
        a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
        rot = np.array([
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ])
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        aff[:3, :3] = rot * np.array([pixdim[1], pixdim[2], qfac * pixdim[3]])
        aff[:3, 3] = (qx, qy, qz)
        return aff
    aff[:3, :3] = np.diag([pixdim[1], pixdim[2], pixdim[3]])
    return aff


def parse_nifti(data: bytes) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Decode a ``.nii`` (optionally gzipped) file.

    Returns the ``[slice][frame][row][col]`` array and the voxel spacings
    ``(pixdim[1], pixdim[2], pixdim[3])`` i.e. (col, row, slice) in mm.
    """
    array, hdr = parse_nifti_full(data)
    return array, tuple(float(v) for v in hdr["pixdim"][1:4])


def parse_nifti_full(data: bytes) -> tuple[np.ndarray, dict]:
    data = bytes(data)
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    hdr = read_header(data)
    dim = hdr["dim"]
    ndim = dim[0]
    if ndim not in (3, 4):
        raise HeaderDimMismatch(f"dim[0] must be 3 or 4, got {ndim}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    nt = dim[4] if ndim == 4 else 1
    if min(nx, ny, nz, nt) < 1:
        raise HeaderDimMismatch(f"non-positive dimension in {dim[:ndim + 1]}")
    code = hdr["datatype"]
    if code not in DATATYPES:
        raise UnsupportedDatatype(f"NIfTI datatype {code} is not supported")
    dtype = np.dtype(DATATYPES[code]).newbyteorder(hdr["endian"])
    if hdr["bitpix"] not in (0, dtype.itemsize * 8):
        raise HeaderDimMismatch(f"bitpix {hdr['bitpix']} disagrees with datatype {code}")
    # "ni1" files keep voxels in a separate .img; accept header+image concatenated
    offset = max(int(hdr["vox_offset"]), HEADER_SIZE)
    count = nx * ny * nz * nt
    needed = offset + count * dtype.itemsize
    if len(data) < needed:
        raise HeaderDimMismatch(
            f"header dims {dim[1:ndim + 1]} need {needed} bytes, file has {len(data)}")
    flat = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    # fortran order on disk: x fastest -> C-order reshape (t, z, y, x)
    array = flat.reshape(nt, nz, ny, nx).transpose(1, 0, 2, 3).astype(dtype.newbyteorder("="))
    return array, hdr


def encode_nifti(array: np.ndarray, spacing=(1.0, 1.0, 1.0), magic: bytes = b"n+1\x00",
                 srow=None, frame_ms: float = 0.0) -> bytes:
    """Write a ``[slice][frame][row][col]`` array as a little-endian ``.nii`` file."""
    array = np.asarray(array)
    if array.ndim != 4:
        raise ValueError("expected a [slice][frame][row][col] array")
    nz, nt, ny, nx = array.shape
    if array.dtype not in _CODES:
        raise UnsupportedDatatype(f"cannot encode dtype {array.dtype}")
    dt = array.dtype.newbyteorder("<")
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    ndim = 4 if nt > 1 else 3
    struct.pack_into("<8h", hdr, 40, ndim, nx, ny, nz, nt if ndim == 4 else 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, _CODES[array.dtype])
    struct.pack_into("<h", hdr, 72, dt.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *spacing, frame_ms, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<f", hdr, 112, 1.0)
    if srow is not None:
        struct.pack_into("<h", hdr, 254, 1)
        struct.pack_into("<12f", hdr, 280, *np.asarray(srow, dtype=float).ravel())
    hdr[344:348] = magic
    body = array.transpose(1, 0, 2, 3).astype(dt).tobytes()
    return bytes(hdr) + b"\x00" * 4 + body
