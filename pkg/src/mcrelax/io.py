"""Binary problem/solution files and PGM/PPM rasters.

Array files share one little-endian header::

    magic  4 bytes   b"MCDT" (costs) | b"MCSF" (relaxed solution) | b"MCDL" (dual)
    version u16 = 1
    width   u32
    height  u32
    labels  u32

followed by the payload in row-major, label-fastest order. Costs and
solutions are float32; dual fields (``MCDL``) carry an extra ``dim u32``
field and a float64 payload so that certificates stay exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import ValidationError, check_data_term, project_simplex

_HEADER = struct.Struct("<4sHIII")
VERSION = 1


class FormatError(ValidationError):
    """Malformed file content."""


def _write_array(path, magic: bytes, arr: np.ndarray, dtype: str, extra: bytes = b"") -> None:
    height, width, labels = arr.shape[:3]
    header = _HEADER.pack(magic, VERSION, width, height, labels) + extra
    payload = np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()
    Path(path).write_bytes(header + payload)


def _read_header(data: bytes, magic: bytes, path) -> tuple[int, int, int]:
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for header")
    got, version, width, height, labels = _HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if width < 1 or height < 1 or labels < 2:
        raise FormatError(f"{path}: invalid sizes {width}x{height}x{labels}")
    return width, height, labels


def _payload(data: bytes, offset: int, count: int, dtype: str, path) -> np.ndarray:
    itemsize = np.dtype(dtype).itemsize
    if len(data) - offset != count * itemsize:
        raise FormatError(f"{path}: payload has {len(data) - offset} bytes, header declares "
                          f"{count * itemsize}")
    return np.frombuffer(data, dtype=np.dtype(dtype).newbyteorder("<"), count=count, offset=offset)


def write_problem(path, s: np.ndarray) -> None:
    s = check_data_term(s)
    _write_array(path, b"MCDT", s, "f4")


def read_problem(path, allow_negative: bool = False) -> np.ndarray:
    """Costs as a float64 ``(H, W, l)`` array (exact float32 values)."""
    data = Path(path).read_bytes()
    width, height, labels = _read_header(data, b"MCDT", path)
    arr = _payload(data, _HEADER.size, width * height * labels, "f4", path)
    s = arr.astype(np.float64).reshape(height, width, labels)
    try:
        return check_data_term(s, allow_negative=allow_negative)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_solution(path, u: np.ndarray) -> None:
    u = np.asarray(u, dtype=np.float64)
    _write_array(path, b"MCSF", u, "f4")


def read_solution(path, raw: bool = False) -> np.ndarray:
    """Relaxed solution as float64.

    float32 storage breaks the unit-sum constraint at the 1e-7 level, so by
    default the field is projected back onto the simplex. ``raw=True``
    returns the stored values unchanged.
    """
    data = Path(path).read_bytes()
    width, height, labels = _read_header(data, b"MCSF", path)
    arr = _payload(data, _HEADER.size, width * height * labels, "f4", path)
    u = arr.astype(np.float64).reshape(height, width, labels)
    if not np.all(np.isfinite(u)):
        raise FormatError(f"{path}: non-finite solution values")
    return u if raw else project_simplex(u)


_DIM = struct.Struct("<I")


def write_dual(path, p: np.ndarray) -> None:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 4:
        raise ValidationError(f"dual field must be (H, W, dim, l), got shape {p.shape}")
    height, width, dim, labels = p.shape
    header = _HEADER.pack(b"MCDL", VERSION, width, height, labels) + _DIM.pack(dim)
    payload = np.ascontiguousarray(p, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_dual(path) -> np.ndarray:
    data = Path(path).read_bytes()
    width, height, labels = _read_header(data, b"MCDL", path)
    if len(data) < _HEADER.size + _DIM.size:
        raise FormatError(f"{path}: file too short for dual header")
    (dim,) = _DIM.unpack_from(data, _HEADER.size)
    if dim != 2:
        raise FormatError(f"{path}: unsupported spatial dimension {dim}")
    arr = _payload(data, _HEADER.size + _DIM.size, width * height * dim * labels, "f8", path)
    p = arr.reshape(height, width, dim, labels).copy()
    if not np.all(np.isfinite(p)):
        raise FormatError(f"{path}: non-finite dual values")
    return p


def label_gray_levels(labels: np.ndarray, n_labels: int) -> np.ndarray:
    """Gray value ``floor(255 * k / (l - 1))`` for 0-based label ``k``."""
    return ((255 * np.asarray(labels, dtype=np.int64)) // (n_labels - 1)).astype(np.uint8)


def write_pgm(path, labels: np.ndarray, n_labels: int) -> None:
    """Binary (P5) label map."""
    img = label_gray_levels(labels, n_labels)
    height, width = img.shape
    Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + img.tobytes())


def _tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """First ``count`` whitespace-separated header integers (``#`` comments skipped)."""
    out = []
    pos = 0
    while len(out) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        try:
            out.append(int(data[start:pos]))
        except ValueError:
            raise FormatError(f"bad PNM header token {data[start:pos]!r}") from None
    return out, pos + 1  # exactly one whitespace byte precedes the raster


def _read_pnm(path, magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} file")
    (width, height, maxval), pos = _tokens(data[2:], 3)
    pos += 2
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height * channels
    if len(data) - pos < n * dtype.itemsize:
        raise FormatError(f"{path}: truncated raster")
    img = np.frombuffer(data, dtype=dtype, count=n, offset=pos).astype(np.int64)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return img.reshape(shape), maxval


def read_pgm(path) -> np.ndarray:
    img, _ = _read_pnm(path, b"P5", 1)
    return img


def read_ppm(path) -> np.ndarray:
    """RGB image scaled to ``[0, 1]`` as float64 ``(H, W, 3)``."""
    img, maxval = _read_pnm(path, b"P6", 3)
    return img / float(maxval)


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write ``(H, W, 3)`` values in ``[0, 1]`` as an 8-bit P6 file."""
    rgb = np.clip(np.rint(np.asarray(rgb, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
    height, width, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + rgb.tobytes())
