"""NRRD volume I/O and axial-slice operations.

Attached-header NRRD only (magic NRRD0001..NRRD0005 accepted, NRRD0004
written), raw and gzip encodings, little/big endian payloads. Header
lines this module does not interpret are carried through verbatim and
re-emitted on write, so metadata like space directions survives the
upload -> patch -> download path untouched.
"""

from __future__ import annotations

import gzip
import re
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IndexOutOfRange,
    MagicMismatch,
    MalformedHeader,
    PatchOutOfBounds,
    SizeMismatch,
    TruncatedData,
    UnsupportedField,
)

__all__ = [
    "Volume",
    "SliceImage",
    "PATCH_SIZE",
    "parse_nrrd",
    "write_nrrd",
    "extract_axial_slice",
    "apply_axial_patch",
]

PATCH_SIZE = 100

_MAGIC = re.compile(rb"^NRRD000[1-5]$")

# NRRD type aliases -> canonical name used by this package.
_TYPE_ALIASES = {
    "uchar": "uint8", "unsigned char": "uint8", "uint8": "uint8", "uint8_t": "uint8",
    "short": "int16", "short int": "int16", "signed short": "int16",
    "signed short int": "int16", "int16": "int16", "int16_t": "int16",
    "ushort": "uint16", "unsigned short": "uint16", "unsigned short int": "uint16",
    "uint16": "uint16", "uint16_t": "uint16",
    "int": "int32", "signed int": "int32", "int32": "int32", "int32_t": "int32",
    "float": "float32", "float32": "float32",
    "double": "float64", "float64": "float64",
}

_NUMPY_DTYPES = {
    "uint8": np.uint8, "int16": np.int16, "uint16": np.uint16,
    "int32": np.int32, "float32": np.float32, "float64": np.float64,
}

# Canonical name -> NRRD type token emitted on write.
_WRITE_NAMES = {
    "uint8": "uint8", "int16": "int16", "uint16": "uint16",
    "int32": "int32", "float32": "float", "float64": "double",
}


@dataclass(frozen=True)
class Volume:
    """3D scalar voxel grid plus the header context needed to re-serialize it.

    ``data`` is (nz, ny, nx) with x fastest-varying, matching NRRD's
    on-disk order for ``sizes: nx ny nz``. Instances are treated as
    immutable; mutating operations return new volumes.
    """

    data: np.ndarray
    voxel_type: str
    encoding: str = "raw"
    endianness: str = "little"
    passthrough_fields: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("Volume data must be 3-dimensional (nz, ny, nx)")
        if self.voxel_type not in _NUMPY_DTYPES:
            raise ValueError(f"unsupported voxel_type {self.voxel_type!r}")
        if self.encoding not in ("raw", "gzip"):
            raise ValueError(f"unsupported encoding {self.encoding!r}")
        if self.endianness not in ("little", "big"):
            raise ValueError(f"unsupported endianness {self.endianness!r}")
        if self.data.dtype != _NUMPY_DTYPES[self.voxel_type]:
            raise ValueError(
                f"data dtype {self.data.dtype} does not match voxel_type {self.voxel_type}"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz) voxel counts."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)


@dataclass(frozen=True)
class SliceImage:
    """One axial slice (or 100x100 patch) in the volume's scalar type."""

    values: np.ndarray  # (height, width)
    slice_index: int = 0

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("SliceImage values must be 2-dimensional")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _split_header(data: bytes) -> tuple[list[bytes], bytes]:
    """Split the byte stream into header lines and the payload after the
    first blank line."""
    lines: list[bytes] = []
    pos = 0
    n = len(data)
    while pos < n:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise MalformedHeader("header not terminated by a blank line")
        line = data[pos:nl]
        if line.endswith(b"\r"):
            line = line[:-1]
        pos = nl + 1
        if line == b"":
            return lines, data[pos:]
        lines.append(line)
    raise MalformedHeader("header not terminated by a blank line")


def parse_nrrd(data: bytes) -> Volume:
    """Parse an attached-header NRRD byte stream into a Volume.

    Raises MagicMismatch, MalformedHeader, UnsupportedField or
    TruncatedData; unknown header lines are preserved, in order, on
    ``passthrough_fields``.
    """
    lines, payload = _split_header(data)
    if not lines or not _MAGIC.match(lines[0]):
        raise MagicMismatch("input does not start with NRRD0001..NRRD0005 magic")

    fields: dict[str, str] = {}
    passthrough: list[str] = []
    for raw in lines[1:]:
        try:
            text = raw.decode("ascii")
        except UnicodeDecodeError:
            text = raw.decode("latin-1")
        if text.startswith("#"):
            passthrough.append(text)
            continue
        if ":=" in text:  # key/value metadata: uninterpreted, preserved
            passthrough.append(text)
            continue
        if ":" not in text:
            raise MalformedHeader(f"header line without field separator: {text!r}")
        key, value = text.split(":", 1)
        key = key.strip().lower()
        value = value.strip()
        if key in ("type", "dimension", "sizes", "encoding", "endian"):
            if key in fields:
                raise MalformedHeader(f"duplicate field: {key}")
            fields[key] = value
        elif key in ("data file", "datafile"):
            raise UnsupportedField("detached headers (data file:) are not supported")
        else:
            passthrough.append(text)

    for required in ("type", "dimension", "sizes", "encoding"):
        if required not in fields:
            raise MalformedHeader(f"missing required field: {required}")

    if fields["dimension"] != "3":
        raise UnsupportedField(f"dimension must be 3, got {fields['dimension']}")

    type_token = " ".join(fields["type"].split()).lower()
    if type_token not in _TYPE_ALIASES:
        raise UnsupportedField(f"voxel type {fields['type']!r} not supported")
    voxel_type = _TYPE_ALIASES[type_token]
    dtype = _NUMPY_DTYPES[voxel_type]

    try:
        sizes = [int(tok) for tok in fields["sizes"].split()]
    except ValueError as exc:
        raise MalformedHeader(f"sizes not parseable: {fields['sizes']!r}") from exc
    if len(sizes) != 3:
        raise MalformedHeader(f"sizes must list 3 values, got {len(sizes)}")
    if any(s < 1 for s in sizes):
        raise MalformedHeader(f"sizes must all be >= 1, got {sizes}")
    nx, ny, nz = sizes

    encoding = fields["encoding"].lower()
    if encoding == "gz":
        encoding = "gzip"
    if encoding not in ("raw", "gzip"):
        raise UnsupportedField(f"encoding {fields['encoding']!r} not supported")

    endianness = fields.get("endian", "little").lower()
    if endianness not in ("little", "big"):
        raise MalformedHeader(f"endian must be little or big, got {fields['endian']!r}")

    if encoding == "gzip":
        try:
            payload = gzip.decompress(payload)
        except (OSError, EOFError, zlib.error) as exc:
            raise TruncatedData(f"gzip payload not decompressable: {exc}") from exc

    count = nx * ny * nz
    nbytes = count * np.dtype(dtype).itemsize
    if len(payload) < nbytes:
        raise TruncatedData(
            f"payload holds {len(payload)} bytes, need {nbytes} for {nx}x{ny}x{nz}"
        )
    byte_order = "<" if endianness == "little" else ">"
    wire_dtype = np.dtype(dtype).newbyteorder(byte_order)
    arr = np.frombuffer(payload[:nbytes], dtype=wire_dtype)
    data3d = arr.astype(dtype, copy=True).reshape(nz, ny, nx)

    return Volume(
        data=data3d,
        voxel_type=voxel_type,
        encoding=encoding,
        endianness=endianness,
        passthrough_fields=tuple(passthrough),
    )


def write_nrrd(vol: Volume) -> bytes:
    """Serialize a Volume as an attached-header NRRD0004 stream.

    Required fields come first, then passthrough lines verbatim, then the
    payload in the volume's own encoding and endianness.
    """
    nx, ny, nz = vol.dims
    dtype = _NUMPY_DTYPES[vol.voxel_type]
    lines = [
        "NRRD0004",
        f"type: {_WRITE_NAMES[vol.voxel_type]}",
        "dimension: 3",
        f"sizes: {nx} {ny} {nz}",
    ]
    if np.dtype(dtype).itemsize > 1:
        lines.append(f"endian: {vol.endianness}")
    lines.append(f"encoding: {vol.encoding}")
    lines.extend(vol.passthrough_fields)
    # latin-1 mirrors the tolerant decode on parse; NRRD headers are
    # nominally ASCII but verbatim passthrough must not crash on stragglers
    header = ("\n".join(lines) + "\n\n").encode("latin-1")

    byte_order = "<" if vol.endianness == "little" else ">"
    payload = np.ascontiguousarray(
        vol.data, dtype=np.dtype(dtype).newbyteorder(byte_order)
    ).tobytes()
    if vol.encoding == "gzip":
        payload = gzip.compress(payload)
    return header + payload


def extract_axial_slice(vol: Volume, k: int) -> SliceImage:
    """Copy out the axial slice at z index ``k`` as an (ny, nx) image."""
    nz = vol.data.shape[0]
    if not 0 <= k < nz:
        raise IndexOutOfRange(f"slice index {k} outside 0..{nz - 1}")
    return SliceImage(values=vol.data[k].copy(), slice_index=k)


def _convert_to_voxel_type(values: np.ndarray, voxel_type: str) -> np.ndarray:
    dtype = _NUMPY_DTYPES[voxel_type]
    if np.issubdtype(dtype, np.integer):
        v = np.asarray(values, dtype=np.float64)
        # round half away from zero, then clamp to the type's range
        rounded = np.sign(v) * np.floor(np.abs(v) + 0.5)
        info = np.iinfo(dtype)
        return np.clip(rounded, info.min, info.max).astype(dtype)
    return np.asarray(values, dtype=dtype)


def apply_axial_patch(
    vol: Volume, k: int, origin: tuple[int, int], patch: SliceImage
) -> Volume:
    """Return a new volume with a 100x100 patch written into slice ``k``.

    Patch values are converted to the volume's voxel type (half-away-
    from-zero rounding, clamped to the type range for integer types).
    Exactly the PATCH_SIZE^2 voxels under the footprint change.
    """
    if patch.width != PATCH_SIZE or patch.height != PATCH_SIZE:
        raise SizeMismatch(
            f"patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {patch.width}x{patch.height}"
        )
    nx, ny, nz = vol.dims
    if not 0 <= k < nz:
        raise IndexOutOfRange(f"slice index {k} outside 0..{nz - 1}")
    x0, y0 = origin
    if not (0 <= x0 and x0 + PATCH_SIZE <= nx and 0 <= y0 and y0 + PATCH_SIZE <= ny):
        raise PatchOutOfBounds(
            f"patch at ({x0},{y0}) does not fit inside {nx}x{ny} slice"
        )
    new_data = vol.data.copy()
    new_data[k, y0:y0 + PATCH_SIZE, x0:x0 + PATCH_SIZE] = _convert_to_voxel_type(
        patch.values, vol.voxel_type
    )
    return Volume(
        data=new_data,
        voxel_type=vol.voxel_type,
        encoding=vol.encoding,
        endianness=vol.endianness,
        passthrough_fields=vol.passthrough_fields,
    )
