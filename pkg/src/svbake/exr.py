"""Minimal OpenEXR scanline codec.

Supports the subset this pipeline produces and consumes: single-part
scanline files, 32-bit float or half pixel data, arbitrary channel names,
uncompressed writes, and NONE / ZIPS / ZIP reads. Written files round-trip
float32 samples bit-exactly (including inf and nan).
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CorruptImageError, UnsupportedFormatError

_MAGIC = b"\x76\x2f\x31\x01"
_PT_UINT = 0
_PT_HALF = 1
_PT_FLOAT = 2

_COMP_NONE = 0
_COMP_ZIPS = 2
_COMP_ZIP = 3
_LINES_PER_CHUNK = {_COMP_NONE: 1, _COMP_ZIPS: 1, _COMP_ZIP: 16}


def _attr(name: str, typ: str, payload: bytes) -> bytes:
    return (
        name.encode("ascii") + b"\0" + typ.encode("ascii") + b"\0"
        + struct.pack("<i", len(payload)) + payload
    )


def write_exr(path, channels: dict[str, np.ndarray]) -> None:
    """Write named float32 planes as an uncompressed scanline EXR.

    All planes must share one (height, width) shape. Channel data is laid
    out in alphabetical channel order as the format requires.
    """
    if not channels:
        raise ValueError("no channels to write")
    names = sorted(channels)
    planes = {}
    shape = None
    for name in names:
        a = np.ascontiguousarray(channels[name], dtype=np.float32)
        if a.ndim != 2:
            raise ValueError(f"channel {name!r} must be 2D, got {a.shape}")
        if shape is None:
            shape = a.shape
        elif a.shape != shape:
            raise ValueError("channel shapes differ")
        planes[name] = a
    height, width = shape

    chlist = b""
    for name in names:
        chlist += name.encode("ascii") + b"\0"
        chlist += struct.pack("<i", _PT_FLOAT)
        chlist += struct.pack("<BBBB", 0, 0, 0, 0)  # pLinear + reserved
        chlist += struct.pack("<ii", 1, 1)  # x/y sampling
    chlist += b"\0"

    box = struct.pack("<iiii", 0, 0, width - 1, height - 1)
    header = b"".join(
        [
            _attr("channels", "chlist", chlist),
            _attr("compression", "compression", struct.pack("<B", _COMP_NONE)),
            _attr("dataWindow", "box2i", box),
            _attr("displayWindow", "box2i", box),
            _attr("lineOrder", "lineOrder", struct.pack("<B", 0)),
            _attr("pixelAspectRatio", "float", struct.pack("<f", 1.0)),
            _attr("screenWindowCenter", "v2f", struct.pack("<ff", 0.0, 0.0)),
            _attr("screenWindowWidth", "float", struct.pack("<f", 1.0)),
            b"\0",
        ]
    )

    preamble = _MAGIC + struct.pack("<I", 2) + header
    table_size = 8 * height
    row_bytes = 4 * width * len(names)
    chunk_bytes = 8 + row_bytes
    first_chunk = len(preamble) + table_size

    with open(path, "wb") as f:
        f.write(preamble)
        offsets = first_chunk + chunk_bytes * np.arange(height, dtype=np.uint64)
        f.write(offsets.astype("<u8").tobytes())
        for y in range(height):
            f.write(struct.pack("<ii", y, row_bytes))
            for name in names:
                f.write(planes[name][y].astype("<f4").tobytes())


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptImageError("truncated EXR file")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def cstring(self, limit: int = 256) -> str:
        end = self.buf.find(b"\0", self.pos, self.pos + limit)
        if end < 0:
            raise CorruptImageError("unterminated string in EXR header")
        s = self.buf[self.pos : end]
        self.pos = end + 1
        return s.decode("ascii", errors="replace")


def _unpredict_reorder(data: bytes) -> bytes:
    # inverse of the EXR zip pre-pass: delta-decode, then interleave halves
    arr = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    arr[1:] -= 128
    arr = np.cumsum(arr).astype(np.uint8)
    half = (len(arr) + 1) // 2
    out = np.empty(len(arr), dtype=np.uint8)
    out[0::2] = arr[:half]
    out[1::2] = arr[half:]
    return out.tobytes()


def read_exr(path) -> dict[str, np.ndarray]:
    """Read a scanline EXR into {channel name: float32 (H, W) array}."""
    with open(path, "rb") as f:
        buf = f.read()
    r = _Reader(buf)
    if r.take(4) != _MAGIC:
        raise CorruptImageError("not an EXR file (bad magic)")
    version = struct.unpack("<I", r.take(4))[0]
    if version & 0xFF != 2 or version & 0x200 or version & 0x1000 or version & 0x800:
        raise UnsupportedFormatError(
            "only single-part scanline EXR version 2 is supported"
        )

    channels: list[tuple[str, int]] = []
    compression = None
    data_window = None
    while True:
        name = r.cstring()
        if name == "":
            break
        typ = r.cstring()
        size = struct.unpack("<i", r.take(4))[0]
        if size < 0:
            raise CorruptImageError("negative attribute size")
        payload = r.take(size)
        if name == "channels" and typ == "chlist":
            pr = _Reader(payload)
            while True:
                ch = pr.cstring()
                if ch == "":
                    break
                ptype = struct.unpack("<i", pr.take(4))[0]
                pr.take(4)  # pLinear + reserved
                xs, ys = struct.unpack("<ii", pr.take(8))
                if xs != 1 or ys != 1:
                    raise UnsupportedFormatError("subsampled channels unsupported")
                channels.append((ch, ptype))
        elif name == "compression":
            compression = payload[0]
        elif name == "dataWindow":
            data_window = struct.unpack("<iiii", payload)
    if not channels or compression is None or data_window is None:
        raise CorruptImageError("EXR header missing required attributes")
    if compression not in _LINES_PER_CHUNK:
        raise UnsupportedFormatError(f"EXR compression {compression} unsupported")

    xmin, ymin, xmax, ymax = data_window
    width = xmax - xmin + 1
    height = ymax - ymin + 1
    if width <= 0 or height <= 0:
        raise CorruptImageError("empty data window")

    sizes = {_PT_HALF: 2, _PT_FLOAT: 4, _PT_UINT: 4}
    dtypes = {_PT_HALF: "<f2", _PT_FLOAT: "<f4", _PT_UINT: "<u4"}
    planes = {
        ch: np.empty((height, width), dtype=np.float32) for ch, _ in channels
    }

    lines = _LINES_PER_CHUNK[compression]
    n_chunks = (height + lines - 1) // lines
    offsets = np.frombuffer(r.take(8 * n_chunks), dtype="<u8")
    for off in offsets:
        rr = _Reader(buf)
        rr.pos = int(off)
        y0, nbytes = struct.unpack("<ii", rr.take(8))
        raw = rr.take(nbytes)
        if compression in (_COMP_ZIPS, _COMP_ZIP):
            try:
                raw = _unpredict_reorder(zlib.decompress(raw))
            except zlib.error as e:
                raise CorruptImageError(f"bad zip chunk: {e}") from None
        n_rows = min(lines, ymax - y0 + 1)
        row_bytes = sum(width * sizes[pt] for _, pt in channels)
        if len(raw) != n_rows * row_bytes:
            raise CorruptImageError("scanline chunk size mismatch")
        pos = 0
        for row in range(n_rows):
            for ch, pt in channels:
                n = width * sizes[pt]
                span = np.frombuffer(raw[pos : pos + n], dtype=dtypes[pt])
                planes[ch][y0 - ymin + row] = span.astype(np.float32)
                pos += n
    return planes
