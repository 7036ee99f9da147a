"""Training loop and dataset assembly for the toy denoiser.

Each synthetic clip is paired with three conditioning variants: the raw
ground-truth flow, an arrow-style field produced by the same sparse-arrow
pipeline used at inference time, and an all-zero field.  Mixing them
during training keeps the model responsive both to flow direction and to
the scalar strength signal on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .. import rng
from ..errors import UserInputError
from ..evalkit import SyntheticSpec, blob_centroid, gen_synthetic
from ..fieldcore import FlowField
from ..sparsectl import (
    ArrowSpec,
    DensifyParams,
    NORM_PIXELS,
    RefineParams,
    arrows_to_refined,
    default_sigma,
)
from .checkpoint import DenoiserWeights
from .model import build_model, default_arch
from .schedule import NoiseSchedule, make_schedule


@dataclass(frozen=True)
class TrainingClip:
    video: np.ndarray              # (L, C, H, W) float32
    gt_field: FlowField            # first ground-truth flow of the clip
    arrow_field: FlowField         # arrow-pipeline rendition of the same motion
    strength: float                # global motion strength of the clip


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 12000
    batch_size: int = 8
    learning_rate: float = 1.0e-3
    seed: int = 0
    arch: dict | None = None
    p_field_raw: float = 0.40
    p_field_arrow: float = 0.40   # remainder of the mass drops the field entirely
    p_mid_t: float = 0.35         # extra sampling mass on mid-noise timesteps

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch_size < 1:
            raise UserInputError("steps and batch_size must be positive")
        if self.learning_rate < 0:
            raise UserInputError("learning rate must be >= 0")
        if not (0 <= self.p_field_raw and 0 <= self.p_field_arrow
                and self.p_field_raw + self.p_field_arrow <= 1.0):
            raise UserInputError("conditioning mix probabilities must sum to <= 1")
        if not (0.0 <= self.p_mid_t <= 1.0):
            raise UserInputError("p_mid_t must lie in [0, 1]")


def arrow_field_for_motion(
    centroid: tuple[float, float], velocity: tuple[float, float], width: int, height: int
) -> FlowField:
    """Arrow-pipeline field matching one blob's velocity at its centroid.

    Mirrors what a user gesture produces at inference: an arrow anchored at
    the blob, direction quantized to integer pixel offsets, strength scaled
    so the encoded displacement equals the velocity.
    """
    speed = math.hypot(*velocity)
    if speed < 1e-9:
        return FlowField.zeros(width, height)
    reach = 4.0
    off_x = round(reach * velocity[0] / speed)
    off_y = round(reach * velocity[1] / speed)
    if off_x == 0 and off_y == 0:
        return FlowField.zeros(width, height)
    sx = min(max(round(centroid[0]), 0), width - 1)
    sy = min(max(round(centroid[1]), 0), height - 1)
    ex = min(max(sx + off_x, 0), width - 1)
    ey = min(max(sy + off_y, 0), height - 1)
    if (ex, ey) == (sx, sy):
        return FlowField.zeros(width, height)
    strength = speed / math.hypot(ex - sx, ey - sy)
    arrow = ArrowSpec(start=(sx, sy), end=(ex, ey), strength=strength)
    densify = DensifyParams(
        sigma=default_sigma(width, height), threshold=0.0, normalization=NORM_PIXELS
    )
    return arrows_to_refined([arrow], width, height, densify, RefineParams())


def make_blob_dataset(
    n_clips: int,
    seed: int = 0,
    width: int = 16,
    height: int = 16,
    frames: int = 8,
    velocity_range: tuple[float, float] = (0.0, 0.8),
    blob_sigma: float = 1.25,
) -> list[TrainingClip]:
    """Synthetic clips plus precomputed conditioning variants."""
    clips: list[TrainingClip] = []
    for i in range(n_clips):
        spec = SyntheticSpec(
            width=width,
            height=height,
            frames=frames,
            blobs=1,
            velocity_range=velocity_range,
            blob_sigma=blob_sigma,
            seed=rng.derive_seed(seed, 7, i),
        )
        video, fields, strength = gen_synthetic(spec)
        first = fields.frames[0]
        centroid = blob_centroid(video[0, 0])
        px = min(max(round(centroid[0]), 0), width - 1)
        py = min(max(round(centroid[1]), 0), height - 1)
        velocity = (float(first.data[py, px, 0]), float(first.data[py, px, 1]))
        arrow_field = arrow_field_for_motion(centroid, velocity, width, height)
        clips.append(
            TrainingClip(video=video, gt_field=first, arrow_field=arrow_field, strength=strength)
        )
    return clips


def strength_percentiles(dataset: list[TrainingClip]) -> dict[str, float]:
    values = np.array([clip.strength for clip in dataset], dtype=np.float64)
    return {
        "low": float(np.percentile(values, 10)),
        "mid": float(np.percentile(values, 50)),
        "high": float(np.percentile(values, 90)),
    }


def strength_speed_ratio(dataset: list[TrainingClip]) -> float:
    """Median global strength per unit blob speed; calibrates gesture harnesses."""
    ratios = []
    for clip in dataset:
        speed = float(clip.gt_field.magnitude().max())
        if speed > 1e-9:
            ratios.append(clip.strength / speed)
    return float(np.median(ratios)) if ratios else 0.0


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def training_loss(model: torch.nn.Module, batch: list[tuple], schedule: NoiseSchedule) -> torch.Tensor:
    """Mean over the batch of the squared L2 norm of the noise-prediction error.

    batch entries are (z0, t, eps, cond) with cond a dict holding `field`
    (2, H, W), `strength` (float), and `ref` (C, H, W); arrays may be numpy
    or torch.  Returns a scalar tensor attached to the model's graph.
    """
    if not batch:
        raise UserInputError("training loss needs a nonempty batch")
    dtype = next(model.parameters()).dtype

    def as_tensor(x):
        tensor = torch.as_tensor(np.asarray(x)) if not isinstance(x, torch.Tensor) else x
        return tensor.to(dtype)

    z0 = torch.stack([as_tensor(item[0]) for item in batch])
    ts = torch.tensor([int(item[1]) for item in batch], dtype=torch.long)
    eps = torch.stack([as_tensor(item[2]) for item in batch])
    fields = torch.stack([as_tensor(item[3]["field"]) for item in batch])
    strengths = torch.tensor([float(item[3]["strength"]) for item in batch], dtype=dtype)
    refs = torch.stack([as_tensor(item[3]["ref"]) for item in batch])
    if z0.shape != eps.shape:
        raise UserInputError(f"z0 {tuple(z0.shape)} and eps {tuple(eps.shape)} disagree")

    bars = torch.tensor([schedule.alpha_bar(int(t)) for t in ts], dtype=dtype)
    shape = (-1,) + (1,) * (z0.ndim - 1)
    z_t = torch.sqrt(bars).reshape(shape) * z0 + torch.sqrt(1.0 - bars).reshape(shape) * eps
    predicted = model(z_t, ts, fields, strengths, refs)
    residual = eps - predicted
    return (residual ** 2).sum(dim=tuple(range(1, residual.ndim))).mean()


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def train(
    dataset: list[TrainingClip], config: TrainConfig | None = None
) -> tuple[DenoiserWeights, list[tuple[int, float]]]:
    """Seeded AdamW optimization of the noise-prediction loss.

    Returns the trained weight bundle and the per-step loss history.
    Aborts with a diagnostic if the loss turns non-finite.  Single-threaded
    so repeated runs with one seed produce identical weights.
    """
    if not dataset:
        raise UserInputError("training dataset is empty")
    config = config or TrainConfig()
    torch.set_num_threads(1)
    arch = config.arch or default_arch()
    model = build_model(arch, init_seed=config.seed)
    schedule = make_schedule(**arch["schedule"])

    videos = torch.from_numpy(np.stack([clip.video for clip in dataset]))
    raw_fields = torch.from_numpy(
        np.stack([clip.gt_field.data.transpose(2, 0, 1) for clip in dataset])
    )
    arrow_fields = torch.from_numpy(
        np.stack([clip.arrow_field.data.transpose(2, 0, 1) for clip in dataset])
    )
    strengths = torch.tensor([clip.strength for clip in dataset], dtype=torch.float32)
    refs = videos[:, 0]
    n_clips, length = videos.shape[0], videos.shape[1]
    total_steps = schedule.total_steps
    bars = torch.from_numpy(schedule.alpha_bars.astype(np.float32))

    gen = rng.stream(config.seed, rng.STREAM_TRAIN)
    # conditioning matters most where the input is too noisy to reveal the
    # motion but the target still depends on it; oversample that band
    mid_lo = max(1, total_steps // 4)
    mid_hi = max(mid_lo, (2 * total_steps) // 3)

    def flip_batch(z0, field, ref, axis: int, channel: int, mask: torch.Tensor):
        # mirror the clip and its flow consistently; the mirrored axis
        # component changes sign
        if not bool(mask.any()):
            return z0, field, ref
        dims = [-1] if axis == 0 else [-2]
        z0[mask] = torch.flip(z0[mask], dims=dims)
        ref[mask] = torch.flip(ref[mask], dims=dims)
        f = torch.flip(field[mask], dims=dims)
        f[:, channel] = -f[:, channel]
        field[mask] = f
        return z0, field, ref

    def draw_batch():
        idx = gen.integers(0, n_clips, size=config.batch_size)
        ts = gen.integers(1, total_steps + 1, size=config.batch_size)
        mid_ts = gen.integers(mid_lo, mid_hi + 1, size=config.batch_size)
        use_mid = gen.random(size=config.batch_size) < config.p_mid_t
        ts = np.where(use_mid, mid_ts, ts)
        mode = gen.random(size=config.batch_size)
        flip_x = torch.from_numpy(gen.random(size=config.batch_size) < 0.5)
        flip_y = torch.from_numpy(gen.random(size=config.batch_size) < 0.5)
        eps = torch.from_numpy(
            rng.normal(gen, (config.batch_size,) + tuple(videos.shape[1:]))
        )
        idx_t = torch.from_numpy(idx)
        field = raw_fields[idx_t].clone()
        arrow_mask = (mode >= config.p_field_raw) & (
            mode < config.p_field_raw + config.p_field_arrow
        )
        zero_mask = mode >= config.p_field_raw + config.p_field_arrow
        field[torch.from_numpy(arrow_mask)] = arrow_fields[idx_t][torch.from_numpy(arrow_mask)]
        field[torch.from_numpy(zero_mask)] = 0.0
        z0 = videos[idx_t].clone()
        ref = refs[idx_t].clone()
        z0, field, ref = flip_batch(z0, field, ref, 0, 0, flip_x)
        z0, field, ref = flip_batch(z0, field, ref, 1, 1, flip_y)
        ab = bars[torch.from_numpy(ts - 1)].reshape(-1, 1, 1, 1, 1)
        z_t = torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * eps
        return z_t, torch.from_numpy(ts), field, strengths[idx_t], ref, eps

    def batch_loss(z_t, ts, field, strength, ref, eps) -> torch.Tensor:
        predicted = model(z_t, ts, field, strength, ref)
        residual = eps - predicted
        return (residual ** 2).sum(dim=tuple(range(1, residual.ndim))).mean()

    with torch.no_grad():
        baseline = float(
            np.mean([batch_loss(*draw_batch()).item() for _ in range(10)])
        )

    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    history: list[tuple[int, float]] = []
    for step in range(1, config.steps + 1):
        optimizer.zero_grad()
        loss = batch_loss(*draw_batch())
        value = float(loss.item())
        if not math.isfinite(value):
            raise RuntimeError(
                f"training diverged at step {step}: loss={value} "
                f"(lr={config.learning_rate}, batch={config.batch_size})"
            )
        loss.backward()
        optimizer.step()
        history.append((step, value))

    tail = [v for _, v in history[-50:]]
    extra = {
        "baseline_loss": baseline,
        "final_loss": float(np.mean(tail)),
        "steps": config.steps,
        "strength_levels": strength_percentiles(dataset),
        "strength_per_speed": strength_speed_ratio(dataset),
        "frames_per_clip": int(length),
    }
    weights = DenoiserWeights.from_model(model, seed=config.seed, trained=True, extra=extra)
    return weights, history


def write_loss_csv(history: list[tuple[int, float]], path) -> None:
    with open(path, "w") as sink:
        sink.write("step,loss\n")
        for step, value in history:
            sink.write(f"{step},{value}\n")
