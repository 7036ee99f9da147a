"""Long-video generation by phased inference over a shared base trajectory.

Denoising runs t = T..1.  The first M = floor(gamma * T) steps shape the
scene contours and are computed once; every further segment restarts from
the boundary latent with its noise component swapped for an entry of a
pre-built, seeded-shuffle noise bank (the boundary noise prediction plus
omega-scaled randomness), then walks the remaining T - M detail steps.
Total denoiser invocations are exactly T + (K-1) * (T - M).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import rng
from .diffcore.checkpoint import DenoiserWeights
from .diffcore.conditioning import Conditioning
from .diffcore.model import ToyDenoiser
from .diffcore.sampling import (
    EvalCounter,
    bind_predictor,
    conditioning_tensors,
    initial_latent,
    resolve_model,
    run_chain,
    sample_clip,
)
from .diffcore.schedule import forward_noise
from .errors import ShapeMismatchError, StateError, UserInputError
from .evalkit import psnr, video_frame
from .fieldcore import Frame
from .ppm import write_ppm


@dataclass(frozen=True)
class SamplerPlan:
    """Phased-inference layout for a K-segment long video."""

    T: int
    gamma: float
    K: int
    L: int
    omega: float
    shuffle_seed: int
    round_up: bool = False

    def __post_init__(self) -> None:
        if self.T < 1:
            raise UserInputError("T must be >= 1")
        if not (0.0 <= self.gamma <= 1.0):
            raise UserInputError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.K < 1 or self.L < 1:
            raise UserInputError("K and L must be >= 1")
        if self.omega < 0:
            raise UserInputError("omega must be >= 0")

    @property
    def boundary(self) -> int:
        """Shared contour steps M; floor by default, ceiling behind round_up."""
        raw = self.gamma * self.T
        return min(self.T, math.ceil(raw) if self.round_up else math.floor(raw))

    @property
    def detail_steps(self) -> int:
        return self.T - self.boundary

    def to_json_dict(self) -> dict:
        return {
            "T": self.T,
            "gamma": self.gamma,
            "K": self.K,
            "L": self.L,
            "omega": self.omega,
            "shuffle_seed": self.shuffle_seed,
        }


def plan_phases(
    T: int, gamma: float, K: int, L: int, omega: float, seed: int, round_up: bool = False
) -> SamplerPlan:
    return SamplerPlan(T=T, gamma=gamma, K=K, L=L, omega=omega, shuffle_seed=seed, round_up=round_up)


def plan_from_json(doc: str | dict) -> SamplerPlan:
    if isinstance(doc, str):
        doc = json.loads(doc)
    known = {"T", "gamma", "K", "L", "omega", "shuffle_seed", "round_up"}
    unknown = set(doc) - known
    if unknown:
        raise UserInputError(f"unknown plan keys: {sorted(unknown)}")
    return SamplerPlan(
        T=int(doc["T"]),
        gamma=float(doc["gamma"]),
        K=int(doc["K"]),
        L=int(doc["L"]),
        omega=float(doc["omega"]),
        shuffle_seed=int(doc["shuffle_seed"]),
        round_up=bool(doc.get("round_up", False)),
    )


def denoiser_eval_count(plan: SamplerPlan) -> int:
    """Exact denoiser invocations of sample_long: T + (K-1) * (T - M)."""
    return plan.T + (plan.K - 1) * plan.detail_steps


# ---------------------------------------------------------------------------
# Shared noise and the noise bank
# ---------------------------------------------------------------------------


def shared_noise(
    weights: DenoiserWeights | ToyDenoiser,
    reference: Frame,
    t: int,
    cond: Conditioning,
    omega: float,
    eps_seed: int,
    plan: SamplerPlan,
) -> np.ndarray:
    """Model-predicted noise from the noised reference, plus omega-scaled jitter.

    Noises the replicated reference to level t (which must not precede the
    plan boundary), predicts the noise there, and blends fresh Gaussian
    randomness on top: out = predicted + omega * eps.
    """
    if t < plan.boundary:
        raise UserInputError(
            f"shared noise requires t >= boundary ({plan.boundary}), got {t}"
        )
    if omega < 0:
        raise UserInputError("omega must be >= 0")
    model, _, schedule = resolve_model(weights)
    cond_t = conditioning_tensors(model, cond)
    ref_plane = reference.values.transpose(2, 0, 1)
    length = plan.L
    base = np.repeat(ref_plane[None], length, axis=0).astype(np.float32)
    eps0 = rng.normal(rng.stream(eps_seed, rng.STREAM_SHARED, 0), base.shape)
    z_t = forward_noise(base, t, eps0, schedule)
    predict = bind_predictor(model, cond_t)
    predicted = predict(torch.from_numpy(z_t), t).numpy()
    jitter = rng.normal(rng.stream(eps_seed, rng.STREAM_SHARED, 1), predicted.shape)
    return predicted + np.float32(omega) * jitter


@dataclass(frozen=True)
class NoiseBank:
    """Shuffled per-(segment, frame) injection noises for segments 2..K."""

    entries: tuple[np.ndarray, ...]
    provenance: tuple[int, ...]
    segments: int
    frames_per_segment: int

    def __post_init__(self) -> None:
        if len(self.entries) != self.segments * self.frames_per_segment:
            raise ShapeMismatchError("bank size does not match segments * frames")
        if sorted(self.provenance) != list(range(len(self.entries))):
            raise ValueError("provenance is not a permutation")
        shapes = {e.shape for e in self.entries}
        if len(shapes) > 1:
            raise ShapeMismatchError(f"bank entries disagree in shape: {shapes}")

    def entry(self, segment: int, frame: int) -> np.ndarray:
        """segment indexes 2..K (segment 1 uses ordinary per-step noise)."""
        if not (2 <= segment <= self.segments + 1):
            raise UserInputError(f"segment {segment} outside 2..{self.segments + 1}")
        if not (0 <= frame < self.frames_per_segment):
            raise UserInputError(f"frame {frame} outside 0..{self.frames_per_segment - 1}")
        return self.entries[(segment - 2) * self.frames_per_segment + frame]


def fisher_yates(n: int, gen: np.random.Generator) -> list[int]:
    """Seeded uniform permutation of range(n)."""
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(gen.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def build_noise_bank(
    plan: SamplerPlan, noise_factory: Callable[[int, int], np.ndarray]
) -> NoiseBank:
    """Generate entries for segments 2..K, then apply a seeded uniform shuffle.

    noise_factory(segment, frame) produces the pre-shuffle entry; the
    recorded provenance maps each post-shuffle slot to its origin index.
    """
    if plan.K < 2:
        raise UserInputError("a noise bank needs at least two segments")
    pre = [
        np.asarray(noise_factory(k, f), dtype=np.float32)
        for k in range(2, plan.K + 1)
        for f in range(plan.L)
    ]
    order = fisher_yates(len(pre), rng.stream(plan.shuffle_seed, rng.STREAM_SHUFFLE))
    entries = tuple(pre[src] for src in order)
    return NoiseBank(
        entries=entries,
        provenance=tuple(order),
        segments=plan.K - 1,
        frames_per_segment=plan.L,
    )


# ---------------------------------------------------------------------------
# Long-video samplers
# ---------------------------------------------------------------------------


def sample_long(
    weights: DenoiserWeights | ToyDenoiser,
    cond: Conditioning,
    plan: SamplerPlan,
    seed: int,
) -> tuple[np.ndarray, dict]:
    """Phased long-video sampling.

    Segment 1 runs all T steps (bitwise identical to sample_clip with the
    same seed).  At the phase boundary its latent is split into predicted
    content and predicted noise; every further segment restarts from the
    same content recombined with its own shuffled bank noise (the boundary
    prediction plus omega-scaled randomness) and walks the detail steps
    deterministically.  The bank's shared base reuses the prediction the
    chain already computed at the boundary, so bank construction adds no
    denoiser invocations.  Returns (K*L frames, run report).
    """
    model, trained, schedule = resolve_model(weights)
    if not trained:
        raise StateError("weights are not tagged as trained; refusing to sample")
    if plan.T != schedule.total_steps:
        raise StateError(
            f"plan T={plan.T} does not match the weights' schedule T={schedule.total_steps}"
        )
    counter = EvalCounter()
    cond_t = conditioning_tensors(model, cond)
    predict = bind_predictor(model, cond_t, counter)
    boundary_level = plan.detail_steps  # latent noise level where detail phase starts

    t0 = time.perf_counter()
    z_init = initial_latent(cond_t["ref"], plan.L, schedule, seed)
    step_stream = rng.stream(seed, rng.STREAM_STEP)

    def fresh_noise(t: int) -> torch.Tensor:
        return torch.from_numpy(rng.normal(step_stream, tuple(z_init.shape)))

    z_final, capture = run_chain(
        predict,
        schedule,
        z_init,
        schedule.total_steps,
        fresh_noise,
        capture_levels=(boundary_level,),
        capture_predictions_at=(boundary_level,) if boundary_level >= 1 else (),
    )
    segments = [np.clip(z_final.numpy(), 0.0, 1.0)]
    wall_ms = [(time.perf_counter() - t0) * 1000.0]

    if plan.K >= 2:
        if plan.detail_steps == 0:
            for _ in range(2, plan.K + 1):
                t0 = time.perf_counter()
                segments.append(segments[0].copy())
                wall_ms.append((time.perf_counter() - t0) * 1000.0)
        else:
            base = capture.predictions[boundary_level].numpy()
            z_b = capture.latents[boundary_level].numpy()
            a_bar = schedule.alpha_bar(boundary_level)
            content = (z_b - math.sqrt(1.0 - a_bar) * base) / math.sqrt(a_bar)
            bank_stream = rng.stream(seed, rng.STREAM_BANK)

            def factory(segment: int, frame: int) -> np.ndarray:
                jitter = rng.normal(bank_stream, base[frame].shape)
                return base[frame] + np.float32(plan.omega) * jitter

            bank = build_noise_bank(plan, factory)
            for k in range(2, plan.K + 1):
                t0 = time.perf_counter()
                bank_noise = np.stack([bank.entry(k, f) for f in range(plan.L)])
                z_k_start = torch.from_numpy(
                    (math.sqrt(a_bar) * content + math.sqrt(1.0 - a_bar) * bank_noise)
                    .astype(np.float32)
                )
                z_k, _ = run_chain(
                    predict,
                    schedule,
                    z_k_start,
                    boundary_level,
                    lambda t: None,
                )
                segments.append(np.clip(z_k.numpy(), 0.0, 1.0))
                wall_ms.append((time.perf_counter() - t0) * 1000.0)

    expected = denoiser_eval_count(plan)
    if counter.count != expected:
        raise RuntimeError(
            f"instrumented evaluations {counter.count} != cost model {expected}"
        )
    video = np.concatenate(segments, axis=0)
    report = {
        "eval_count": counter.count,
        "wall_ms_per_segment": wall_ms,
        "boundary_psnr": _boundary_psnrs(segments),
        "plan": plan.to_json_dict(),
    }
    return video, report


def sample_long_naive(
    weights: DenoiserWeights | ToyDenoiser,
    cond: Conditioning,
    K: int,
    L: int,
    seed: int,
) -> tuple[np.ndarray, dict]:
    """Baseline: chain K independent clips, each conditioned on the last frame."""
    if K < 1:
        raise UserInputError("K must be >= 1")
    model, trained, schedule = resolve_model(weights)
    if not trained:
        raise StateError("weights are not tagged as trained; refusing to sample")
    counter = EvalCounter()
    segments: list[np.ndarray] = []
    wall_ms: list[float] = []
    current = cond
    for k in range(K):
        seg_seed = seed if k == 0 else rng.derive_seed(seed, rng.STREAM_SEGMENT, k)
        t0 = time.perf_counter()
        clip = sample_clip(model_with_flag(model, trained), current, L, seg_seed, counter)
        wall_ms.append((time.perf_counter() - t0) * 1000.0)
        segments.append(clip)
        current = Conditioning(
            reference_frame=video_frame(clip, L - 1),
            motion_field=cond.motion_field,
            global_strength=cond.global_strength,
            object_strengths=cond.object_strengths,
        )
    video = np.concatenate(segments, axis=0)
    report = {
        "eval_count": counter.count,
        "wall_ms_per_segment": wall_ms,
        "boundary_psnr": _boundary_psnrs(segments),
    }
    return video, report


def model_with_flag(model: ToyDenoiser, trained: bool) -> ToyDenoiser:
    model.trained_flag = trained
    return model


def _boundary_psnrs(segments: list[np.ndarray]) -> list[float]:
    """Consistency of adjacent segments at the handoff: aligned-frame PSNR.

    Identical segments (the gamma=1 replication limit) score the 100 dB cap.
    """
    values = []
    for a, b in zip(segments[:-1], segments[1:]):
        values.append(psnr(a, b))
    return values


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export_video(directory, video: np.ndarray, report: dict | None = None) -> None:
    """Numbered PPM frames plus an index JSON (and the run report if given)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(video.shape[0]):
        name = f"frame_{k:05d}.ppm"
        write_ppm(video_frame(video, k), directory / name)
        files.append(name)
    index = {
        "frames": int(video.shape[0]),
        "width": int(video.shape[3]),
        "height": int(video.shape[2]),
        "files": files,
    }
    (directory / "index.json").write_text(json.dumps(index, indent=2))
    if report is not None:
        (directory / "report.json").write_text(json.dumps(report, indent=2))
