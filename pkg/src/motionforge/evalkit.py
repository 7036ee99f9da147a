"""Desk-scale metrics and the synthetic moving-blob dataset generator.

The generator renders Gaussian blobs translating at constant per-blob
velocities and returns the exact analytic flow alongside the frames, so
every downstream component can be tested against ground truth instead of
an estimated flow.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatchError, UserInputError
from .fieldcore import FlowField, Frame, MotionFields, motion_strength
from .ppm import write_ppm

BLOB_AMPLITUDE = 0.3
SUPPORT_SIGMAS = 3.0   # flow support radius = SUPPORT_SIGMAS * sigma + speed

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW = 8

_POOL_GRID = 8


def as_video(arr: np.ndarray) -> np.ndarray:
    """Validate an (L, C, H, W) float sample stack."""
    v = np.asarray(arr, dtype=np.float32)
    if v.ndim != 4:
        raise ShapeMismatchError(f"video tensor must be (L, C, H, W), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("video tensor contains non-finite samples")
    return v


def video_frame(video: np.ndarray, index: int) -> Frame:
    """Extract frame `index` of an (L, C, H, W) video as a Frame."""
    return Frame(np.transpose(video[index], (1, 2, 0)))


def frame_to_plane(frame: Frame) -> np.ndarray:
    """Channel-mean (H, W) float64 view of a frame."""
    return frame.values.astype(np.float64).mean(axis=2)


# ---------------------------------------------------------------------------
# Synthetic dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Moving-blob clip description.

    velocity_range is (min_speed, max_speed) in pixels/frame; speeds are
    drawn uniformly in that range with uniform directions unless explicit
    `velocities` pin them.  Placement keeps each blob's flow support fully
    in frame for the whole clip.
    """

    width: int = 16
    height: int = 16
    frames: int = 8
    blobs: int = 1
    velocity_range: tuple[float, float] = (0.0, 0.8)
    blob_sigma: float = 1.25
    seed: int = 0
    velocities: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.blobs < 1:
            raise UserInputError("need at least one blob")
        if self.frames < 1:
            raise UserInputError("need at least one frame")
        lo, hi = self.velocity_range
        if lo < 0 or hi < lo:
            raise UserInputError(f"bad velocity range {self.velocity_range}")
        if self.blob_sigma <= 0:
            raise UserInputError("blob sigma must be positive")
        if self.velocities is not None and len(self.velocities) != self.blobs:
            raise UserInputError("explicit velocities must match blob count")


def _support_radius(sigma: float, speed: float) -> float:
    return SUPPORT_SIGMAS * sigma + speed


def gen_synthetic(spec: SyntheticSpec) -> tuple[np.ndarray, MotionFields, float]:
    """Render a clip and its exact analytic flow.

    Returns (video (L, 1, H, W), flow fields for steps k -> k+1, global
    motion strength of those fields).  Raises UserInputError when no
    placement keeps every blob's support in frame for the whole clip.
    """
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed)))
    w, h, n_frames = spec.width, spec.height, spec.frames

    velocities: list[tuple[float, float]] = []
    for b in range(spec.blobs):
        if spec.velocities is not None:
            velocities.append((float(spec.velocities[b][0]), float(spec.velocities[b][1])))
        else:
            speed = gen.uniform(spec.velocity_range[0], spec.velocity_range[1])
            angle = gen.uniform(0.0, 2.0 * math.pi)
            velocities.append((speed * math.cos(angle), speed * math.sin(angle)))

    radii = [_support_radius(spec.blob_sigma, math.hypot(vx, vy)) for vx, vy in velocities]
    starts: list[tuple[float, float]] = []
    for b, (vx, vy) in enumerate(velocities):
        drift_x, drift_y = (n_frames - 1) * vx, (n_frames - 1) * vy
        m = radii[b]
        x_lo, x_hi = m + max(0.0, -drift_x), (w - 1 - m) - max(0.0, drift_x)
        y_lo, y_hi = m + max(0.0, -drift_y), (h - 1 - m) - max(0.0, drift_y)
        if x_lo > x_hi or y_lo > y_hi:
            raise UserInputError(
                f"blob {b} cannot stay in a {w}x{h} frame at velocity ({vx:.2f}, {vy:.2f})"
            )
        placed = False
        for _ in range(200):
            cx = gen.uniform(x_lo, x_hi)
            cy = gen.uniform(y_lo, y_hi)
            ok = True
            for other, (ox, oy) in enumerate(starts):
                sep = radii[b] + radii[other]
                for k in range(n_frames):
                    dx = (cx + k * vx) - (ox + k * velocities[other][0])
                    dy = (cy + k * vy) - (oy + k * velocities[other][1])
                    if math.hypot(dx, dy) < sep:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                starts.append((cx, cy))
                placed = True
                break
        if not placed:
            raise UserInputError(f"could not place blob {b} without support overlap")

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    video = np.zeros((n_frames, 1, h, w), dtype=np.float32)
    flows = []
    for k in range(n_frames):
        plane = np.zeros((h, w), dtype=np.float64)
        flow = np.zeros((h, w, 2), dtype=np.float32)
        for b, ((sx, sy), (vx, vy)) in enumerate(zip(starts, velocities)):
            cx, cy = sx + k * vx, sy + k * vy
            d2 = (xs - cx) ** 2 + (ys - cy) ** 2
            plane += BLOB_AMPLITUDE * np.exp(-d2 / (2.0 * spec.blob_sigma ** 2))
            support = d2 <= radii[b] ** 2
            flow[support, 0] = vx
            flow[support, 1] = vy
        video[k, 0] = np.clip(plane, 0.0, 1.0).astype(np.float32)
        if k < n_frames - 1:
            flows.append(FlowField(flow))
    if not flows:
        flows = [FlowField.zeros(w, h)]
    fields = MotionFields(tuple(flows))
    return video, fields, motion_strength(fields)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

PSNR_CAP_DB = 100.0


def _pixels(x) -> np.ndarray:
    if isinstance(x, Frame):
        return x.values.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio on unit range; identical inputs cap at 100 dB."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ShapeMismatchError(f"psnr shapes differ: {pa.shape} vs {pb.shape}")
    mse = float(np.mean((pa - pb) ** 2))
    if mse <= 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def ssim(a: Frame, b: Frame) -> float:
    """Mean structural similarity over uniform 8x8 windows, stride 1.

    Window moments are plain means (population form); multi-channel frames
    average the per-channel scores.  Constants C1=(0.01)^2, C2=(0.03)^2 on
    unit range.
    """
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise ShapeMismatchError(f"ssim shapes differ: {pa.shape} vs {pb.shape}")
    if pa.ndim == 2:
        pa, pb = pa[:, :, None], pb[:, :, None]
    h, w, channels = pa.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise UserInputError(f"frame {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    scores = []
    for c in range(channels):
        scores.append(_ssim_plane(pa[:, :, c], pb[:, :, c]))
    return float(np.mean(scores))


def _ssim_plane(a: np.ndarray, b: np.ndarray) -> float:
    view_a = np.lib.stride_tricks.sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    view_b = np.lib.stride_tricks.sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = view_a.mean(axis=(2, 3))
    mu_b = view_b.mean(axis=(2, 3))
    var_a = (view_a ** 2).mean(axis=(2, 3)) - mu_a ** 2
    var_b = (view_b ** 2).mean(axis=(2, 3)) - mu_b ** 2
    cov = (view_a * view_b).mean(axis=(2, 3)) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float((num / den).mean())


def _frame_embedding(plane: np.ndarray) -> np.ndarray:
    """Pooled, centered, L2-normalized proxy embedding of an (H, W) plane."""
    h, w = plane.shape
    if h < _POOL_GRID or w < _POOL_GRID:
        raise UserInputError(f"frame {w}x{h} too small for the {_POOL_GRID}x{_POOL_GRID} pooling grid")
    ry = [int(i * h / _POOL_GRID) for i in range(_POOL_GRID + 1)]
    rx = [int(i * w / _POOL_GRID) for i in range(_POOL_GRID + 1)]
    pooled = np.empty((_POOL_GRID, _POOL_GRID), dtype=np.float64)
    for i in range(_POOL_GRID):
        for j in range(_POOL_GRID):
            pooled[i, j] = plane[ry[i] : ry[i + 1], rx[j] : rx[j + 1]].mean()
    vec = pooled.ravel()
    vec = vec - vec.mean()
    return vec


def temporal_consistency(video: np.ndarray) -> float:
    """Mean adjacent-frame cosine similarity of pooled proxy embeddings.

    Near-zero embeddings (flat frames) compare as identical: a pair of flat
    frames scores 1, a flat frame against a structured one scores 0.
    """
    v = as_video(video)
    if v.shape[0] < 2:
        raise UserInputError("temporal consistency needs at least 2 frames")
    planes = v.astype(np.float64).mean(axis=1)
    embeddings = [_frame_embedding(p) for p in planes]
    sims = []
    for e1, e2 in zip(embeddings[:-1], embeddings[1:]):
        n1, n2 = np.linalg.norm(e1), np.linalg.norm(e2)
        if n1 < 1e-12 and n2 < 1e-12:
            sims.append(1.0)
        elif n1 < 1e-12 or n2 < 1e-12:
            sims.append(0.0)
        else:
            sims.append(float(np.dot(e1, e2) / (n1 * n2)))
    return float(np.mean(sims))


def blob_centroid(plane: np.ndarray) -> tuple[float, float]:
    """Intensity-weighted centroid (x, y) of a single-channel image."""
    p = np.asarray(plane, dtype=np.float64)
    total = p.sum()
    if total <= 0:
        raise ValueError("cannot locate a centroid in an all-zero image")
    ys, xs = np.meshgrid(np.arange(p.shape[0]), np.arange(p.shape[1]), indexing="ij")
    return float((xs * p).sum() / total), float((ys * p).sum() / total)


def centroid_track(video: np.ndarray) -> list[tuple[float, float]]:
    v = as_video(video)
    return [blob_centroid(v[k].mean(axis=0)) for k in range(v.shape[0])]


def mean_centroid_drift(video: np.ndarray) -> tuple[float, float]:
    """Mean per-step centroid displacement (du, dv) across the clip."""
    track = centroid_track(video)
    if len(track) < 2:
        return (0.0, 0.0)
    dus = [b[0] - a[0] for a, b in zip(track[:-1], track[1:])]
    dvs = [b[1] - a[1] for a, b in zip(track[:-1], track[1:])]
    return float(np.mean(dus)), float(np.mean(dvs))


def frame_difference_energy(video: np.ndarray) -> float:
    """Mean squared difference between adjacent frames; proxy for motion amount."""
    v = as_video(video).astype(np.float64)
    if v.shape[0] < 2:
        return 0.0
    return float(np.mean((v[1:] - v[:-1]) ** 2))


# ---------------------------------------------------------------------------
# Reports and export
# ---------------------------------------------------------------------------


def write_metrics_csv(path, rows: list[dict]) -> None:
    """Rows of {clip_id, psnr, ssim, temcons} as CSV."""
    with open(path, "w", newline="") as sink:
        writer = csv.DictWriter(sink, fieldnames=["clip_id", "psnr", "ssim", "temcons"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def export_dataset(directory, video: np.ndarray, fields: MotionFields, strength: float) -> None:
    """Frames as PPM, per-step ground-truth .flo, and a JSON manifest."""
    from .fieldcore import write_flo

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    v = as_video(video)
    for k in range(v.shape[0]):
        write_ppm(video_frame(v, k), directory / f"frame_{k:04d}.ppm")
    for k, flow in enumerate(fields):
        with open(directory / f"flow_{k:04d}.flo", "wb") as sink:
            write_flo(flow, sink)
    manifest = {
        "frames": int(v.shape[0]),
        "width": int(v.shape[3]),
        "height": int(v.shape[2]),
        "channels": int(v.shape[1]),
        "flow_steps": len(fields),
        "motion_strength": strength,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
