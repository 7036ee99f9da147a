"""Ancestral sampling for the toy denoiser.

Chains start from the reference frame noised to the top timestep, which
matches the marginals the model was trained on, and walk the standard
posterior-mean update down to t=1.  All noise draws come from keyed
streams so a (inputs, seed) pair fully determines the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from .. import rng
from ..errors import ShapeMismatchError, StateError, UserInputError
from .checkpoint import DenoiserWeights
from .conditioning import Conditioning
from .model import ToyDenoiser
from .schedule import NoiseSchedule, make_schedule


@dataclass
class EvalCounter:
    """Counts denoiser invocations; sampling asserts against the cost model."""

    count: int = 0

    def bump(self) -> None:
        self.count += 1


def resolve_model(weights: DenoiserWeights | ToyDenoiser) -> tuple[ToyDenoiser, bool, NoiseSchedule]:
    if isinstance(weights, DenoiserWeights):
        model = weights.to_model()
        trained = weights.trained
    elif isinstance(weights, ToyDenoiser):
        model = weights
        trained = bool(getattr(weights, "trained_flag", False))
    else:
        raise UserInputError(f"expected weights or a model, got {type(weights)!r}")
    schedule = make_schedule(**model.arch["schedule"])
    return model, trained, schedule


def conditioning_tensors(model: ToyDenoiser, cond: Conditioning) -> dict:
    arch = model.arch
    ref = cond.reference_frame
    if (ref.width, ref.height) != (arch["img_w"], arch["img_h"]):
        raise ShapeMismatchError(
            f"reference {ref.width}x{ref.height} vs model {arch['img_w']}x{arch['img_h']}"
        )
    if ref.channels != arch["img_channels"]:
        raise ShapeMismatchError(
            f"reference has {ref.channels} channels, model expects {arch['img_channels']}"
        )
    if cond.motion_field is None:
        field_arr = np.zeros((2, arch["img_h"], arch["img_w"]), dtype=np.float32)
    else:
        field_arr = cond.motion_field.data.transpose(2, 0, 1)
    return {
        "field": torch.from_numpy(np.ascontiguousarray(field_arr))[None],
        "strength": torch.tensor([cond.global_strength], dtype=torch.float32),
        "ref": torch.from_numpy(np.ascontiguousarray(ref.values.transpose(2, 0, 1)))[None],
    }


def bind_predictor(
    model: ToyDenoiser, cond_t: dict, counter: EvalCounter | None = None
) -> Callable[[torch.Tensor, int], torch.Tensor]:
    """Close over conditioning: (z (L,C,H,W), t) -> predicted noise."""

    def predict(z: torch.Tensor, t: int) -> torch.Tensor:
        if counter is not None:
            counter.bump()
        with torch.no_grad():
            out = model(
                z[None],
                torch.tensor([t], dtype=torch.long),
                cond_t["field"],
                cond_t["strength"],
                cond_t["ref"],
            )
        return out[0]

    return predict


def posterior_step(
    z_t: torch.Tensor,
    t: int,
    eps_hat: torch.Tensor,
    schedule: NoiseSchedule,
    injected_noise: torch.Tensor | None,
) -> torch.Tensor:
    """One ancestral update; at t=1 the injected noise is ignored."""
    beta = schedule.beta(t)
    a_bar = schedule.alpha_bar(t)
    a_bar_prev = schedule.alpha_bar(t - 1)
    mean = (z_t - (beta / math.sqrt(1.0 - a_bar)) * eps_hat) / math.sqrt(1.0 - beta)
    if t == 1 or injected_noise is None:
        return mean
    sigma = math.sqrt((1.0 - a_bar_prev) / (1.0 - a_bar) * beta)
    return mean + sigma * injected_noise


def denoise_step(
    z_t: np.ndarray,
    t: int,
    cond: Conditioning,
    weights: DenoiserWeights | ToyDenoiser,
    schedule: NoiseSchedule | None = None,
    injected_noise: np.ndarray | None = None,
) -> np.ndarray:
    """Single reverse step z_t -> z_{t-1} using the model's noise prediction."""
    model, _, model_schedule = resolve_model(weights)
    schedule = schedule or model_schedule
    z = torch.from_numpy(np.asarray(z_t, dtype=np.float32))
    if z.ndim != 4:
        raise ShapeMismatchError(f"latent must be (L, C, H, W), got {tuple(z.shape)}")
    predict = bind_predictor(model, conditioning_tensors(model, cond))
    eps_hat = predict(z, t)
    noise = None
    if injected_noise is not None:
        noise_arr = np.asarray(injected_noise, dtype=np.float32)
        if noise_arr.shape != tuple(z.shape):
            raise ShapeMismatchError(
                f"injected noise {noise_arr.shape} vs latent {tuple(z.shape)}"
            )
        noise = torch.from_numpy(noise_arr)
    return posterior_step(z, t, eps_hat, schedule, noise).numpy()


@dataclass
class ChainCapture:
    """Intermediate artifacts a chain run was asked to keep."""

    latents: dict[int, torch.Tensor] = field(default_factory=dict)
    predictions: dict[int, torch.Tensor] = field(default_factory=dict)


def run_chain(
    predict: Callable[[torch.Tensor, int], torch.Tensor],
    schedule: NoiseSchedule,
    z_start: torch.Tensor,
    t_start: int,
    noise_fn: Callable[[int], torch.Tensor | None],
    capture_levels: tuple[int, ...] = (),
    capture_predictions_at: tuple[int, ...] = (),
) -> tuple[torch.Tensor, ChainCapture]:
    """Walk t_start..1; capture requested latents and predictions.

    noise_fn(t) supplies the injected noise for the step leaving level t
    (never called at t=1).  Latent capture happens when the chain lands on
    that noise level, so capture_levels=(b,) stores the latent after the
    step from b+1; prediction capture stores the model output computed at
    the given step.
    """
    capture = ChainCapture()
    z = z_start
    if t_start in capture_levels:
        capture.latents[t_start] = z.clone()
    for t in range(t_start, 0, -1):
        eps_hat = predict(z, t)
        if t in capture_predictions_at:
            capture.predictions[t] = eps_hat.clone()
        noise = noise_fn(t) if t > 1 else None
        z = posterior_step(z, t, eps_hat, schedule, noise)
        if (t - 1) in capture_levels:
            capture.latents[t - 1] = z.clone()
    return z, capture


def initial_latent(
    ref: torch.Tensor, length: int, schedule: NoiseSchedule, seed: int
) -> torch.Tensor:
    """Reference frame replicated across the clip and noised to the top level."""
    shape = (length,) + tuple(ref.shape[1:])
    eps0 = torch.from_numpy(rng.normal(rng.stream(seed, rng.STREAM_INIT), shape))
    z0_rep = ref.expand(shape).clone()
    top = schedule.total_steps
    a_bar = schedule.alpha_bar(top)
    return math.sqrt(a_bar) * z0_rep + math.sqrt(1.0 - a_bar) * eps0


def sample_clip(
    weights: DenoiserWeights | ToyDenoiser,
    cond: Conditioning,
    length: int,
    seed: int,
    counter: EvalCounter | None = None,
) -> np.ndarray:
    """Full ancestral sample of an `length`-frame clip; returns (L, C, H, W) in [0, 1]."""
    if length < 1:
        raise UserInputError("clip length must be >= 1")
    model, trained, schedule = resolve_model(weights)
    if not trained:
        raise StateError("weights are not tagged as trained; refusing to sample")
    cond_t = conditioning_tensors(model, cond)
    predict = bind_predictor(model, cond_t, counter)
    z = initial_latent(cond_t["ref"], length, schedule, seed)
    step_stream = rng.stream(seed, rng.STREAM_STEP)

    def noise_fn(t: int) -> torch.Tensor:
        return torch.from_numpy(rng.normal(step_stream, tuple(z.shape)))

    z_final, _ = run_chain(predict, schedule, z, schedule.total_steps, noise_fn)
    return np.clip(z_final.numpy(), 0.0, 1.0)
