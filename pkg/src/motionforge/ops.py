"""Shared orchestration for the CLI and the HTTP service.

Both frontends call these helpers so identical inputs produce
byte-identical .flo, PPM, and report payloads on either surface.
"""

from __future__ import annotations

import base64
import time

import numpy as np

from .diffcore.checkpoint import DenoiserWeights
from .diffcore.conditioning import Conditioning
from .diffcore.model import ToyDenoiser
from .diffcore.sampling import EvalCounter, resolve_model, sample_clip
from .evalkit import psnr, temporal_consistency, video_frame
from .fieldcore import FlowField, Frame, flo_bytes, flow_to_color
from .longgen import (
    SamplerPlan,
    denoiser_eval_count,
    model_with_flag,
    sample_long,
    sample_long_naive,
)
from .ppm import ppm_bytes
from .sparsectl import (
    ArrowSet,
    DensifyParams,
    RefineParams,
    densify,
    refine,
    sparse_field_from_arrows,
)


def flow_products(
    spec: ArrowSet, densify_params: DensifyParams, refine_params: RefineParams
) -> dict[str, FlowField]:
    """Sparse, dense, and refined fields for one arrow document."""
    sparse = sparse_field_from_arrows(spec.arrows, spec.width, spec.height)
    dense = densify(sparse, densify_params)
    refined = refine(dense, refine_params, sources=[a.start for a in spec.arrows])
    return {"sparse": sparse, "dense": dense, "refined": refined}


def flow_payload(field: FlowField) -> dict:
    """Wire form of one field: base64 .flo bytes plus a base64 PPM preview."""
    return {
        "width": field.width,
        "height": field.height,
        "flow": base64.b64encode(flo_bytes(field)).decode("ascii"),
        "preview": base64.b64encode(ppm_bytes(flow_to_color(field))).decode("ascii"),
    }


def conditioning_from_arrows(
    spec: ArrowSet,
    densify_params: DensifyParams,
    refine_params: RefineParams,
    reference: Frame | None = None,
) -> Conditioning:
    """Arrow document -> refined-field conditioning.

    Without an explicit reference frame a black frame of the document's size is
    used, which suits the synthetic-blob toy models.
    """
    fields = flow_products(spec, densify_params, refine_params)
    if reference is None:
        reference = Frame(np.zeros((spec.height, spec.width, 1), dtype=np.float32))
    return Conditioning(
        reference_frame=reference,
        motion_field=fields["refined"],
        global_strength=spec.global_strength,
        object_strengths=tuple(a.strength for a in spec.arrows),
    )


def run_sample_clip(
    weights: DenoiserWeights | ToyDenoiser,
    cond: Conditioning,
    frames: int,
    seed: int,
) -> tuple[np.ndarray, dict]:
    """Short-clip sample plus its report (eval count, timing, frame-0 PSNR)."""
    counter = EvalCounter()
    t0 = time.perf_counter()
    video = sample_clip(weights, cond, frames, seed, counter)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    ref_plane = cond.reference_frame.values.transpose(2, 0, 1)
    report = {
        "eval_count": counter.count,
        "wall_ms": wall_ms,
        "frames": int(video.shape[0]),
        "frame0_psnr": psnr(video[0], ref_plane),
        "seed": seed,
    }
    return video, report


def run_ablation(
    weights: DenoiserWeights | ToyDenoiser,
    cond: Conditioning,
    base_plan: SamplerPlan,
    gammas: list[float],
    seed: int,
    repeats: int = 3,
) -> list[dict]:
    """Sweep the phase-split fraction; one row per gamma.

    wall_ms is the median total sampling time over `repeats` runs.
    """
    model, trained, _ = resolve_model(weights)
    model = model_with_flag(model, trained)
    rows = []
    for gamma in gammas:
        plan = SamplerPlan(
            T=base_plan.T,
            gamma=gamma,
            K=base_plan.K,
            L=base_plan.L,
            omega=base_plan.omega,
            shuffle_seed=base_plan.shuffle_seed,
            round_up=base_plan.round_up,
        )
        times = []
        video = report = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            video, report = sample_long(model, cond, plan, seed)
            times.append((time.perf_counter() - t0) * 1000.0)
        boundary = report["boundary_psnr"]
        rows.append(
            {
                "gamma": gamma,
                "eval_count": denoiser_eval_count(plan),
                "wall_ms": float(np.median(times)),
                "boundary_psnr": float(np.mean(boundary)) if boundary else float("nan"),
                "temcons": temporal_consistency(video),
            }
        )
    return rows


def frames_payload(video: np.ndarray) -> list[str]:
    return [
        base64.b64encode(ppm_bytes(video_frame(video, k))).decode("ascii")
        for k in range(video.shape[0])
    ]


__all__ = [
    "flow_products",
    "flow_payload",
    "conditioning_from_arrows",
    "run_sample_clip",
    "run_ablation",
    "frames_payload",
    "sample_long",
    "sample_long_naive",
]
