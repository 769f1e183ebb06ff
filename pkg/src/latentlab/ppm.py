"""Binary (P6) portable pixmap reading and writing, 8-bit RGB only."""

from __future__ import annotations

import numpy as np

from .errors import ParseError, ShapeError, ValidationError

_WHITESPACE = b" \t\n\r\x0b\x0c"


def ppm_bytes(pixels):
    """Encode a (H, W, 3) uint8 array as P6 bytes."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        raise ValidationError(f"pixels must be uint8, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"pixels must have shape (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + arr.tobytes()


def write_ppm(path, pixels):
    with open(path, "wb") as fh:
        fh.write(ppm_bytes(pixels))


def _next_token(data, pos):
    """Skip whitespace and # comments, return (token, position after it)."""
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch in (b"#",):
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos : pos + 1] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header")
    return data[start:pos], pos


def parse_ppm(data):
    """Decode P6 bytes to a (H, W, 3) uint8 array."""
    try:
        magic, pos = _next_token(data, 0)
    except ParseError:
        raise ParseError("empty or truncated file")
    if magic != b"P6":
        raise ParseError(f"expected P6 magic, got {magic!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise ParseError(f"non-numeric {name}: {token!r}")
    w, h, maxval = fields
    if w <= 0 or h <= 0:
        raise ParseError(f"bad dimensions {w}x{h}")
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}, only 255 is handled")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise ParseError("missing separator before pixel data")
    pos += 1
    need = w * h * 3
    if len(data) - pos < need:
        raise ParseError(
            f"truncated pixel data: expected {need} bytes, got {len(data) - pos}"
        )
    return (
        np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
        .reshape(h, w, 3)
        .copy()
    )


def read_ppm(path):
    with open(path, "rb") as fh:
        return parse_ppm(fh.read())


def to_unit(pixels):
    """uint8 pixels -> float64 in [0, 1]."""
    return np.asarray(pixels, dtype=np.uint8).astype(float) / 255.0


def to_bytes8(image):
    """float image in [0, 1] -> uint8 pixels (round to nearest)."""
    arr = np.asarray(image, dtype=float)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValidationError(
            f"image values outside [0, 1]: min={arr.min():.6g}, max={arr.max():.6g}"
        )
    return np.rint(arr * 255.0).astype(np.uint8)
