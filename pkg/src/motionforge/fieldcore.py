"""Flow fields, frames, warping, motion strength, and bit-exact .flo I/O.

A flow field stores one (u, v) pixel displacement per pixel: the value at
(x, y) moves that pixel to (x + u, y + v) one frame later.  Fields are kept
as float32 so the Middlebury .flo round trip is bit-exact.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np
from scipy import ndimage

from .errors import BoundsError, FormatError, ShapeMismatchError

FLO_MAGIC = 202021.25
_FLO_MAGIC_BYTES = struct.pack("<f", FLO_MAGIC)


@dataclass(frozen=True)
class FlowField:
    """Dense per-pixel displacement field.

    data is (height, width, 2) float32, last axis (u, v) in pixels per
    frame step.  All components must be finite.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ShapeMismatchError(f"flow data must be (H, W, 2), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatchError("flow field must be at least 1x1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("flow field contains non-finite components")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2), dtype=np.float32))

    def magnitude(self) -> np.ndarray:
        """Per-pixel Euclidean magnitude, float64 (H, W)."""
        d = self.data.astype(np.float64)
        return np.hypot(d[..., 0], d[..., 1])

    def scaled(self, factor: float) -> "FlowField":
        return FlowField(self.data * np.float32(factor))


@dataclass(frozen=True)
class MotionFields:
    """Ordered sequence of same-sized flow fields covering a clip."""

    frames: tuple[FlowField, ...]

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        if len(frames) < 1:
            raise ValueError("motion fields require at least one flow field")
        w, h = frames[0].width, frames[0].height
        for f in frames[1:]:
            if f.width != w or f.height != h:
                raise ShapeMismatchError("all flow fields must share dimensions")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


@dataclass(frozen=True)
class Frame:
    """Single image, values in [0, 1], stored (height, width, channels) float32."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ShapeMismatchError(f"frame values must be (H, W, C), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame contains non-finite samples")
        if arr.min() < -1e-6 or arr.max() > 1 + 1e-6:
            raise ValueError("frame samples must lie in [0, 1]")
        object.__setattr__(self, "values", np.clip(arr, 0.0, 1.0))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def warp_coords(p: Sequence[float], flow: FlowField) -> tuple[float, float]:
    """Project a coordinate one frame forward: p + f(p).

    p is (x, y); fractional coordinates sample the flow bilinearly.  The
    result may leave the field bounds (callers clamp if they care).
    """
    x, y = float(p[0]), float(p[1])
    if not (0.0 <= x <= flow.width - 1 and 0.0 <= y <= flow.height - 1):
        raise BoundsError(f"coordinate ({x}, {y}) outside {flow.width}x{flow.height} field")
    coords = np.array([[y], [x]], dtype=np.float64)
    u = ndimage.map_coordinates(flow.data[..., 0].astype(np.float64), coords, order=1, mode="nearest")[0]
    v = ndimage.map_coordinates(flow.data[..., 1].astype(np.float64), coords, order=1, mode="nearest")[0]
    return (x + u, y + v)


def advect_frame(frame: Frame, flow: FlowField) -> Frame:
    """Backward-warp a frame: output(x, y) = frame sampled at (x, y) - f(x, y).

    Bilinear sampling; out-of-bounds samples clamp to the nearest edge pixel.
    """
    if frame.width != flow.width or frame.height != flow.height:
        raise ShapeMismatchError(
            f"frame {frame.width}x{frame.height} vs flow {flow.width}x{flow.height}"
        )
    h, w = frame.height, frame.width
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    src_x = xs - flow.data[..., 0].astype(np.float64)
    src_y = ys - flow.data[..., 1].astype(np.float64)
    coords = np.stack([src_y.ravel(), src_x.ravel()])
    out = np.empty_like(frame.values)
    for c in range(frame.channels):
        sampled = ndimage.map_coordinates(
            frame.values[..., c].astype(np.float64), coords, order=1, mode="nearest"
        )
        out[..., c] = sampled.reshape(h, w).astype(np.float32)
    return Frame(np.clip(out, 0.0, 1.0))


def motion_strength(fields: MotionFields) -> float:
    """Mean per-pixel Euclidean flow magnitude over all frames and pixels."""
    total = 0.0
    count = 0
    for f in fields:
        mag = f.magnitude()
        total += float(mag.sum())
        count += mag.size
    return total / count


# ---------------------------------------------------------------------------
# Middlebury .flo
# ---------------------------------------------------------------------------


def write_flo(flow: FlowField, sink: BinaryIO) -> None:
    """Serialize in Middlebury .flo layout.

    4-byte float magic 202021.25, little-endian int32 width and height,
    then row-major interleaved float32 (u, v) pairs.
    """
    sink.write(_FLO_MAGIC_BYTES)
    sink.write(struct.pack("<ii", flow.width, flow.height))
    sink.write(np.ascontiguousarray(flow.data, dtype="<f4").tobytes())


def flo_bytes(flow: FlowField) -> bytes:
    import io

    buf = io.BytesIO()
    write_flo(flow, buf)
    return buf.getvalue()


def read_flo(source: BinaryIO) -> FlowField:
    """Inverse of write_flo; rejects bad magic, bad dimensions, short payloads."""
    header = source.read(12)
    if len(header) < 12:
        raise FormatError("flo stream shorter than its 12-byte header")
    (magic,) = struct.unpack("<f", header[:4])
    if magic != FLO_MAGIC:
        raise FormatError(f"bad flo magic {magic!r}, expected {FLO_MAGIC}")
    width, height = struct.unpack("<ii", header[4:12])
    if width <= 0 or height <= 0:
        raise FormatError(f"nonpositive flo dimensions {width}x{height}")
    expected = width * height * 2 * 4
    payload = source.read(expected)
    if len(payload) != expected:
        raise FormatError(
            f"truncated flo payload: expected {expected} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2)
    return FlowField(data.copy())


def read_flo_bytes(raw: bytes) -> FlowField:
    import io

    return read_flo(io.BytesIO(raw))


# ---------------------------------------------------------------------------
# Flow visualization
# ---------------------------------------------------------------------------


def flow_to_color(flow: FlowField, max_magnitude: float | None = None) -> Frame:
    """Color-wheel rendering: hue = atan2(v, u), saturation = |f| / max, value 1.

    Zero flow renders white.  max_magnitude None means auto (field max); an
    all-zero field under auto also renders white.
    """
    u = flow.data[..., 0].astype(np.float64)
    v = flow.data[..., 1].astype(np.float64)
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(mag.max())
    if max_magnitude <= 0.0:
        return Frame(np.ones((flow.height, flow.width, 3), dtype=np.float32))
    hue = (np.arctan2(v, u) / (2.0 * math.pi)) % 1.0
    sat = np.clip(mag / max_magnitude, 0.0, 1.0)
    rgb = _hsv_to_rgb(hue, sat, np.ones_like(hue))
    return Frame(rgb.astype(np.float32))


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    rgb = np.zeros(h.shape + (3,), dtype=np.float64)
    lut = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    for idx, (r, g, b) in enumerate(lut):
        mask = i == idx
        rgb[mask, 0] = r[mask]
        rgb[mask, 1] = g[mask]
        rgb[mask, 2] = b[mask]
    return rgb
