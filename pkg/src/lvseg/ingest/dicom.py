"""Minimal DICOM reader/writer for explicit-VR little-endian, single-frame files.

Only the handful of tags the pipeline needs are interpreted; every other
element is skipped by length. Compressed or implicit-VR transfer syntaxes
are rejected outright.
"""
from __future__ import annotations

import re
import struct

import numpy as np

from ..errors import DataError, MissingTag, TruncatedPixelData, UnsupportedTransferSyntax
from ..types import ImageMeta, PhaseEncoding, Sex

EXPLICIT_VR_LITTLE_ENDIAN = "1.2.840.10008.1.2.1"

ROWS = (0x0028, 0x0010)
COLUMNS = (0x0028, 0x0011)
PIXEL_SPACING = (0x0028, 0x0030)
IMAGE_POSITION = (0x0020, 0x0032)
IMAGE_ORIENTATION = (0x0020, 0x0037)
PIXEL_DATA = (0x7FE0, 0x0010)
PHASE_ENCODING = (0x0018, 0x1312)
SLICE_LOCATION = (0x0020, 0x1041)
PATIENT_AGE = (0x0010, 0x1010)
PATIENT_SEX = (0x0010, 0x0040)
PATIENT_ID = (0x0010, 0x0020)
SERIES_NUMBER = (0x0020, 0x0011)
ACQUISITION_NUMBER = (0x0020, 0x0012)
INSTANCE_NUMBER = (0x0020, 0x0013)
NUMBER_OF_FRAMES = (0x0028, 0x0008)
SAMPLES_PER_PIXEL = (0x0028, 0x0002)
BITS_ALLOCATED = (0x0028, 0x0100)
PIXEL_REPRESENTATION = (0x0028, 0x0103)
TRANSFER_SYNTAX = (0x0002, 0x0010)

REQUIRED_TAGS = (ROWS, COLUMNS, PIXEL_SPACING, IMAGE_POSITION, IMAGE_ORIENTATION, PIXEL_DATA)

# VRs whose explicit encoding carries 2 reserved bytes and a 32-bit length
_LONG_VRS = {b"OB", b"OD", b"OF", b"OL", b"OV", b"OW", b"SQ", b"SV", b"UC", b"UN", b"UR", b"UT", b"UV"}
_UNDEFINED = 0xFFFFFFFF
_ITEM = (0xFFFE, 0xE000)
_ITEM_END = (0xFFFE, 0xE00D)
_SEQ_END = (0xFFFE, 0xE0DD)


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def need(self, n):
        if self.pos + n > len(self.buf):
            raise DataError(f"DICOM stream ends inside an element at byte {self.pos}")

    def tag(self):
        self.need(4)
        g, e = struct.unpack_from("<HH", self.buf, self.pos)
        self.pos += 4
        return g, e

    def u16(self):
        self.need(2)
        (v,) = struct.unpack_from("<H", self.buf, self.pos)
        self.pos += 2
        return v

    def u32(self):
        self.need(4)
        (v,) = struct.unpack_from("<I", self.buf, self.pos)
        self.pos += 4
        return v


def _skip_undefined_sequence(r: _Reader):
    while True:
        tag = r.tag()
        length = r.u32()
        if tag == _SEQ_END:
            return
        if tag != _ITEM:
            raise DataError(f"unexpected tag {tag} inside sequence")
        if length == _UNDEFINED:
            _read_dataset(r, stop_at=_ITEM_END)
        else:
            r.need(length)
            r.pos += length


def _read_dataset(r: _Reader, stop_at=None, elements=None):
    """Read explicit-VR LE elements until the buffer ends or ``stop_at`` is hit."""
    while r.pos < len(r.buf):
        tag = r.tag()
        if tag[0] == 0xFFFE:
            length = r.u32()
            if tag == stop_at:
                return elements
            raise DataError(f"unexpected delimiter {tag}")
        r.need(2)
        vr = r.buf[r.pos:r.pos + 2]
        r.pos += 2
        if vr in _LONG_VRS:
            r.need(2)
            r.pos += 2
            length = r.u32()
        elif vr.isalpha() and vr.isupper():
            length = r.u16()
        else:
            raise UnsupportedTransferSyntax("element without explicit VR; only explicit VR little endian is supported")
        if length == _UNDEFINED:
            if vr == b"SQ":
                _skip_undefined_sequence(r)
                continue
            if tag == PIXEL_DATA:
                raise UnsupportedTransferSyntax("encapsulated (compressed) pixel data is not supported")
            raise DataError(f"undefined length for non-sequence element {tag}")
        if tag == PIXEL_DATA and r.pos + length > len(r.buf):
            raise TruncatedPixelData(
                f"PixelData declares {length} bytes but only {len(r.buf) - r.pos} remain")
        r.need(length)
        if elements is not None:
            elements[tag] = (vr.decode("ascii"), r.buf[r.pos:r.pos + length])
        r.pos += length
    if stop_at is not None:
        raise DataError("DICOM stream ended before item delimiter")
    return elements


def read_elements(data: bytes) -> dict:
    """Return ``{(group, element): (vr, raw value bytes)}`` for a Part-10 file.

    Raises UnsupportedTransferSyntax unless the file is explicit VR little endian.
    """
    data = bytes(data)
    if len(data) >= 132 and data[128:132] == b"DICM":
        pos = 132
    elif data[:4] == b"DICM":
        pos = 4
    else:
        raise DataError("missing DICM prefix; not a DICOM Part-10 file")
    elements: dict = {}
    _read_dataset(_Reader(data, pos), elements=elements)
    ts = elements.get(TRANSFER_SYNTAX)
    if ts is None:
        raise UnsupportedTransferSyntax("file meta has no TransferSyntaxUID")
    uid = ts[1].rstrip(b"\x00 ").decode("ascii")
    if uid != EXPLICIT_VR_LITTLE_ENDIAN:
        raise UnsupportedTransferSyntax(f"transfer syntax {uid} is not supported")
    return elements


def _text(raw: bytes) -> str:
    return raw.decode("latin-1").rstrip("\x00 ").strip()


def _numbers(raw: bytes) -> list[float]:
    return [float(v) for v in _text(raw).split("\\") if v.strip()]


def _us(raw: bytes) -> int:
    return struct.unpack("<H", raw[:2])[0]


def parse_age(text: str) -> int | None:
    """Parse a DICOM AS value such as ``056Y``; only year forms are accepted."""
    text = text.strip()
    if not text:
        return None
    m = re.fullmatch(r"(\d{1,3})\s*([DWMY]?)", text)
    if not m:
        raise DataError(f"unparseable PatientAge {text!r}")
    if m.group(2) not in ("Y", ""):
        raise DataError(f"PatientAge {text!r} is not expressed in years")
    return int(m.group(1))


def parse_dicom(data: bytes) -> tuple[ImageMeta, np.ndarray]:
    """Decode one DICOM file into its metadata and a ``rows x cols`` pixel array."""
    el = read_elements(data)
    for tag in REQUIRED_TAGS:
        if tag not in el:
            raise MissingTag(tag)

    rows = _us(el[ROWS][1])
    cols = _us(el[COLUMNS][1])
    if NUMBER_OF_FRAMES in el and int(_numbers(el[NUMBER_OF_FRAMES][1])[0]) != 1:
        raise UnsupportedTransferSyntax("multi-frame DICOM is not supported")
    if SAMPLES_PER_PIXEL in el and _us(el[SAMPLES_PER_PIXEL][1]) != 1:
        raise DataError("only single-sample (grayscale) pixel data is supported")
    bits = _us(el[BITS_ALLOCATED][1]) if BITS_ALLOCATED in el else 16
    signed = PIXEL_REPRESENTATION in el and _us(el[PIXEL_REPRESENTATION][1]) == 1
    if bits not in (8, 16):
        raise DataError(f"BitsAllocated {bits} is not supported")
    dtype = np.dtype(f"<{'i' if signed else 'u'}{bits // 8}")

    pixels = el[PIXEL_DATA][1]
    n = rows * cols * dtype.itemsize
    if len(pixels) < n:
        raise TruncatedPixelData(f"PixelData has {len(pixels)} bytes, expected {n}")
    image = np.frombuffer(pixels[:n], dtype=dtype).reshape(rows, cols)

    spacing = _numbers(el[PIXEL_SPACING][1])
    if len(spacing) != 2:
        raise DataError(f"PixelSpacing must have 2 values, got {spacing}")
    phase = PhaseEncoding.UNKNOWN
    if PHASE_ENCODING in el:
        phase = {"ROW": PhaseEncoding.ROW, "COL": PhaseEncoding.COL}.get(
            _text(el[PHASE_ENCODING][1]).upper(), PhaseEncoding.UNKNOWN)
    slice_loc = None
    if SLICE_LOCATION in el and _numbers(el[SLICE_LOCATION][1]):
        slice_loc = _numbers(el[SLICE_LOCATION][1])[0]
    age = parse_age(_text(el[PATIENT_AGE][1])) if PATIENT_AGE in el else None
    sex = Sex.UNKNOWN
    if PATIENT_SEX in el:
        sex = {"M": Sex.M, "F": Sex.F}.get(_text(el[PATIENT_SEX][1]).upper(), Sex.UNKNOWN)
    acquisition = 0
    for tag in (SERIES_NUMBER, ACQUISITION_NUMBER):
        if tag in el and _numbers(el[tag][1]):
            acquisition = int(_numbers(el[tag][1])[0])
            break
    instance = None
    if INSTANCE_NUMBER in el and _numbers(el[INSTANCE_NUMBER][1]):
        instance = int(_numbers(el[INSTANCE_NUMBER][1])[0])

    meta = ImageMeta(
        pixel_spacing_row=spacing[0],
        pixel_spacing_col=spacing[1],
        rows=rows,
        cols=cols,
        ipp=tuple(_numbers(el[IMAGE_POSITION][1])),
        iop=tuple(_numbers(el[IMAGE_ORIENTATION][1])),
        phase_encoding=phase,
        slice_location_raw=slice_loc,
        acquisition_index=acquisition,
        instance_number=instance,
        patient_age=age,
        patient_sex=sex,
    )
    return meta, image


def patient_id_of(data: bytes) -> str | None:
    el = read_elements(data)
    return _text(el[PATIENT_ID][1]) if PATIENT_ID in el else None


# -- writing -----------------------------------------------------------------

def _pad(value: bytes, pad: bytes = b" ") -> bytes:
    return value + pad if len(value) % 2 else value


def encode_element(tag, vr: str, value: bytes) -> bytes:
    vr_b = vr.encode("ascii")
    head = struct.pack("<HH", *tag) + vr_b
    if vr_b in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    return head + struct.pack("<H", len(value)) + value


def _ds(values) -> bytes:
    return _pad("\\".join(repr(float(v)) if not float(v).is_integer() else str(int(v)) for v in values).encode())


def encode_dicom(meta: ImageMeta, pixels: np.ndarray, patient_id: str = "anon",
                 omit=(), overrides: dict | None = None,
                 transfer_syntax: str = EXPLICIT_VR_LITTLE_ENDIAN) -> bytes:
    """Write a single-frame explicit-VR LE DICOM file.

    ``omit`` drops tags; ``overrides`` maps tags to ``(vr, raw bytes)`` and
    replaces the default encoding. Both exist so tests can craft edge cases.
    """
    pixels = np.asarray(pixels)
    if pixels.shape != (meta.rows, meta.cols):
        raise ValueError("pixel array shape does not match meta")
    signed = pixels.dtype.kind == "i"
    raw_pixels = pixels.astype("<i2" if signed else "<u2").tobytes()
    elements = {
        PATIENT_ID: ("LO", _pad(patient_id.encode())),
        ROWS: ("US", struct.pack("<H", meta.rows)),
        COLUMNS: ("US", struct.pack("<H", meta.cols)),
        PIXEL_SPACING: ("DS", _ds([meta.pixel_spacing_row, meta.pixel_spacing_col])),
        IMAGE_POSITION: ("DS", _ds(meta.ipp)),
        IMAGE_ORIENTATION: ("DS", _ds(meta.iop)),
        SAMPLES_PER_PIXEL: ("US", struct.pack("<H", 1)),
        BITS_ALLOCATED: ("US", struct.pack("<H", 16)),
        PIXEL_REPRESENTATION: ("US", struct.pack("<H", 1 if signed else 0)),
        SERIES_NUMBER: ("IS", _pad(str(meta.acquisition_index).encode())),
        PIXEL_DATA: ("OW", raw_pixels),
    }
    if meta.phase_encoding != PhaseEncoding.UNKNOWN:
        elements[PHASE_ENCODING] = ("CS", _pad(meta.phase_encoding.value.upper().encode()))
    if meta.slice_location_raw is not None:
        elements[SLICE_LOCATION] = ("DS", _ds([meta.slice_location_raw]))
    if meta.patient_age is not None:
        elements[PATIENT_AGE] = ("AS", f"{meta.patient_age:03d}Y".encode())
    if meta.patient_sex != Sex.UNKNOWN:
        elements[PATIENT_SEX] = ("CS", _pad(meta.patient_sex.value.encode()))
    if meta.instance_number is not None:
        elements[INSTANCE_NUMBER] = ("IS", _pad(str(meta.instance_number).encode()))
    elements.update(overrides or {})
    for tag in omit:
        elements.pop(tag, None)

    ts = _pad(transfer_syntax.encode(), b"\x00")
    file_meta = encode_element(TRANSFER_SYNTAX, "UI", ts)
    group_len = encode_element((0x0002, 0x0000), "UL", struct.pack("<I", len(file_meta)))
    body = b"".join(encode_element(tag, vr, val) for tag, (vr, val) in sorted(elements.items()))
    return b"\x00" * 128 + b"DICM" + group_len + file_meta + body
