"""Raster containers and bit-exact file I/O.

Every grid-shaped object in the pipeline (input image, feature map,
segmentation label map, change map) travels through the same `Raster`
container and the same on-disk formats:

- DNHG: an in-house little-endian binary format (24-byte header + payload)
  that round-trips float32/uint8/uint32 data bit-exactly.  This is the
  exchange format between pipeline stages and with the external feature
  extractor.
- PGM (P5) / PPM (P6), binary, maxval 255, for human-viewable inputs and
  outputs.

Rasters are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError

DNHG_MAGIC = b"DNHG"
DNHG_VERSION = 1

# dtype code <-> numpy dtype for the DNHG header
_DTYPE_BY_CODE = {0: np.float32, 1: np.uint8, 2: np.uint32}
_CODE_BY_NAME = {"float32": 0, "uint8": 1, "uint32": 2}

_HEADER = struct.Struct("<4sIIIII")  # magic, version, height, width, channels, dtype code


@dataclass(frozen=True)
class Raster:
    """An immutable H x W x C grid of values.

    The payload is stored row-major, pixel-major: flattening gives
    index = (y * W + x) * C + c.

    Attributes:
        height: Number of rows (>= 1).
        width: Number of columns (>= 1).
        channels: Values per pixel (>= 1).
        dtype: One of "float32", "uint8", "uint32".
        data: Array of shape (height, width, channels), C-contiguous.
    """

    height: int
    width: int
    channels: int
    dtype: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise DimensionError(
                f"raster dimensions must be >= 1, got "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.dtype not in _CODE_BY_NAME:
            raise FormatError(f"unsupported dtype {self.dtype!r}")
        expected = (self.height, self.width, self.channels)
        if self.data.shape != expected:
            raise DimensionError(
                f"data shape {self.data.shape} does not match header {expected}"
            )
        if self.data.dtype != np.dtype(self.dtype):
            raise FormatError(
                f"data dtype {self.data.dtype} does not match declared {self.dtype}"
            )
        arr = np.ascontiguousarray(self.data)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Raster":
        """Wrap a 2-D (single channel) or 3-D array without copying values."""
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise DimensionError(f"expected 2-D or 3-D array, got ndim={arr.ndim}")
        h, w, c = arr.shape
        return cls(h, w, c, str(arr.dtype), np.ascontiguousarray(arr))

    def plane(self, channel: int = 0) -> np.ndarray:
        """Return one channel as an (H, W) view."""
        return self.data[:, :, channel]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and self.channels == other.channels
            and self.dtype == other.dtype
            and np.array_equal(self.data, other.data)
        )


# ---------------------------------------------------------------------------
# DNHG binary format
# ---------------------------------------------------------------------------


def _read_dnhg(raw: bytes) -> Raster:
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes < {_HEADER.size}")
    magic, version, h, w, c, code = _HEADER.unpack_from(raw, 0)
    if magic != DNHG_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DNHG_MAGIC!r}")
    if version != DNHG_VERSION:
        raise FormatError(f"unsupported version {version}, expected {DNHG_VERSION}")
    if code not in _DTYPE_BY_CODE:
        raise FormatError(f"unsupported dtype code {code}")
    if h < 1 or w < 1 or c < 1:
        raise FormatError(f"bad dimensions in header: {h}x{w}x{c}")
    dtype = np.dtype(_DTYPE_BY_CODE[code]).newbyteorder("<")
    expected = h * w * c * dtype.itemsize
    payload = raw[_HEADER.size :]
    if len(payload) < expected:
        raise FormatError(f"truncated payload: {len(payload)} bytes < {expected}")
    if len(payload) > expected:
        raise FormatError(f"trailing bytes after payload: {len(payload) - expected}")
    arr = np.frombuffer(payload, dtype=dtype).astype(dtype.newbyteorder("="))
    return Raster(h, w, c, str(arr.dtype), arr.reshape(h, w, c))


def _write_dnhg(r: Raster) -> bytes:
    header = _HEADER.pack(
        DNHG_MAGIC, DNHG_VERSION, r.height, r.width, r.channels, _CODE_BY_NAME[r.dtype]
    )
    payload = np.ascontiguousarray(r.data, dtype=np.dtype(r.dtype).newbyteorder("<"))
    return header + payload.tobytes()


# ---------------------------------------------------------------------------
# PGM / PPM (binary, maxval 255)
# ---------------------------------------------------------------------------


def _read_pnm_header(raw: bytes) -> tuple[int, int, int, int]:
    """Parse a P5/P6 header; returns (channels, width, height, payload offset)."""
    if raw[:2] == b"P5":
        channels = 1
    elif raw[:2] == b"P6":
        channels = 3
    else:
        raise FormatError(f"bad magic {raw[:2]!r}, expected P5 or P6")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":  # comment to end of line
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise FormatError(f"bad header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"maxval {maxval} unsupported, expected 255")
    return channels, width, height, pos


def _read_pnm(raw: bytes) -> Raster:
    channels, width, height, pos = _read_pnm_header(raw)
    expected = width * height * channels
    payload = raw[pos:]
    if len(payload) < expected:
        raise FormatError(f"truncated payload: {len(payload)} bytes < {expected}")
    arr = np.frombuffer(payload[:expected], dtype=np.uint8)
    return Raster(height, width, channels, "uint8", arr.reshape(height, width, channels))


def _write_pnm(r: Raster, fmt: str) -> bytes:
    if fmt == "pgm":
        if r.channels != 1 or r.dtype != "uint8":
            raise FormatError(
                f"pgm requires 1-channel uint8, got {r.channels}-channel {r.dtype}"
            )
        magic = b"P5"
    else:
        if r.channels != 3 or r.dtype != "uint8":
            raise FormatError(
                f"ppm requires 3-channel uint8, got {r.channels}-channel {r.dtype}"
            )
        magic = b"P6"
    header = magic + b"\n%d %d\n255\n" % (r.width, r.height)
    return header + r.data.tobytes()


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def read_raster(path: str) -> Raster:
    """Read a DNHG, PGM (P5) or PPM (P6) file into a Raster.

    The format is sniffed from the magic bytes.  Raises FormatError with a
    message naming the offending field when the file is malformed.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] == DNHG_MAGIC:
        return _read_dnhg(raw)
    if raw[:2] in (b"P5", b"P6"):
        return _read_pnm(raw)
    raise FormatError(f"bad magic {raw[:4]!r} in {path}")


def write_raster(r: Raster, path: str, fmt: str = "dnhg") -> None:
    """Write a Raster in one of the supported formats.

    Args:
        r: Raster to write.
        path: Destination file path.
        fmt: "dnhg" (any dtype), "pgm" (1-channel uint8) or "ppm"
            (3-channel uint8).

    The written file reads back bitwise-equal via read_raster.
    """
    if fmt == "dnhg":
        blob = _write_dnhg(r)
    elif fmt in ("pgm", "ppm"):
        blob = _write_pnm(r, fmt)
    else:
        raise FormatError(f"unknown format {fmt!r}")
    with open(path, "wb") as f:
        f.write(blob)


def stack(r1: Raster, r2: Raster) -> Raster:
    """Stack a co-registered pair channel-wise into one float32 raster.

    The first raster's channels precede the second's.  uint8 values are
    scaled by 1/255 so downstream arithmetic is dtype-uniform; float32
    values pass through unchanged.

    Raises DimensionError on height/width/dtype mismatch.
    """
    if (r1.height, r1.width) != (r2.height, r2.width) or r1.dtype != r2.dtype:
        raise DimensionError(
            f"cannot stack {r1.height}x{r1.width} {r1.dtype} "
            f"with {r2.height}x{r2.width} {r2.dtype}"
        )
    if r1.dtype == "uint8":
        a = r1.data.astype(np.float32) / np.float32(255.0)
        b = r2.data.astype(np.float32) / np.float32(255.0)
    elif r1.dtype == "float32":
        a, b = r1.data, r2.data
    else:
        raise FormatError(f"stack supports uint8 or float32 inputs, got {r1.dtype}")
    out = np.concatenate([a, b], axis=2)
    return Raster(r1.height, r1.width, r1.channels + r2.channels, "float32", out)
