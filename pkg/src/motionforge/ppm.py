"""Binary PPM (P6, maxval 255) import/export for Frame payloads.

PPM is the canonical byte format for frame fixtures and service previews;
grayscale frames are replicated across the three channels on write.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .fieldcore import Frame


def ppm_bytes(frame: Frame) -> bytes:
    values = frame.values
    if frame.channels == 1:
        values = np.repeat(values, 3, axis=2)
    elif frame.channels != 3:
        raise FormatError(f"PPM export needs 1 or 3 channels, got {frame.channels}")
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    quantized = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    return header + quantized.tobytes()


def write_ppm(frame: Frame, path) -> None:
    with open(path, "wb") as sink:
        sink.write(ppm_bytes(frame))


def read_ppm_bytes(raw: bytes) -> Frame:
    if not raw.startswith(b"P6"):
        raise FormatError("not a binary PPM (P6) stream")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        try:
            fields.append(int(raw[start:pos]))
        except ValueError as exc:
            raise FormatError(f"bad PPM header token {raw[start:pos]!r}") from exc
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}")
    if width <= 0 or height <= 0:
        raise FormatError(f"nonpositive PPM dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    payload = raw[pos : pos + expected]
    if len(payload) != expected:
        raise FormatError(f"truncated PPM payload: expected {expected}, got {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return Frame(data.astype(np.float32) / 255.0)


def read_ppm(path) -> Frame:
    with open(path, "rb") as source:
        return read_ppm_bytes(source.read())
