"""Run configuration: one JSON document driving CLI commands and the service."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, UserInputError
from .longgen import SamplerPlan
from .sparsectl import DensifyParams, NORM_FRAME_FRACTION, RefineParams, default_sigma

_TOP_KEYS = {"seed", "width", "height", "dataset", "weights", "out", "train", "plan",
             "densify", "refine", "sample"}
_TRAIN_KEYS = {"clips", "steps", "batch_size", "learning_rate", "frames",
               "velocity_min", "velocity_max", "blob_sigma"}
_PLAN_KEYS = {"T", "gamma", "K", "L", "omega", "shuffle_seed", "round_up"}
_DENSIFY_KEYS = {"sigma", "threshold", "normalization"}
_REFINE_KEYS = {"iterations", "smoothing_weight", "preserve_sources"}
_SAMPLE_KEYS = {"frames", "frame0_min_psnr"}


@dataclass
class RunConfig:
    seed: int = 0
    width: int = 16
    height: int = 16
    dataset: str | None = None
    weights: str | None = None
    out: str | None = None
    # training
    train_clips: int = 200
    train_steps: int = 12000
    batch_size: int = 8
    learning_rate: float = 1.0e-3
    clip_frames: int = 8
    velocity_range: tuple[float, float] = (0.0, 0.8)
    blob_sigma: float = 1.25
    # phased sampling
    total_steps: int = 50
    gamma: float = 0.8
    segments: int = 5
    segment_frames: int = 8
    omega: float = 0.2
    shuffle_seed: int = 0
    round_up: bool = False
    # arrow pipeline
    densify_sigma: float | None = None   # None: scale with frame size
    densify_threshold: float = 0.05
    densify_normalization: str = NORM_FRAME_FRACTION
    refine_iterations: int = 8
    refine_weight: float = 0.5
    preserve_sources: bool = True
    # short-clip sampling
    sample_frames: int = 8
    frame0_min_psnr: float = 18.0

    def plan(self) -> SamplerPlan:
        return SamplerPlan(
            T=self.total_steps,
            gamma=self.gamma,
            K=self.segments,
            L=self.segment_frames,
            omega=self.omega,
            shuffle_seed=self.shuffle_seed,
            round_up=self.round_up,
        )

    def densify_params(self, width: int | None = None, height: int | None = None) -> DensifyParams:
        w = width if width is not None else self.width
        h = height if height is not None else self.height
        sigma = self.densify_sigma if self.densify_sigma is not None else default_sigma(w, h)
        return DensifyParams(
            sigma=sigma,
            threshold=self.densify_threshold,
            normalization=self.densify_normalization,
        )

    def refine_params(self) -> RefineParams:
        return RefineParams(
            iterations=self.refine_iterations,
            smoothing_weight=self.refine_weight,
            preserve_sources=self.preserve_sources,
        )


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise FormatError(f"unknown {where} config keys: {sorted(unknown)}")


def load_config(path_or_doc) -> RunConfig:
    """Parse a RunConfig JSON document; unknown keys are rejected."""
    if isinstance(path_or_doc, (str, Path)):
        try:
            doc = json.loads(Path(path_or_doc).read_text())
        except OSError:
            raise
        except json.JSONDecodeError as exc:
            raise FormatError(f"config is not valid JSON: {exc}") from exc
    else:
        doc = path_or_doc
    if not isinstance(doc, dict):
        raise FormatError("config must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "top-level")
    cfg = RunConfig()
    for key in ("seed", "width", "height"):
        if key in doc:
            setattr(cfg, key, int(doc[key]))
    for key in ("dataset", "weights", "out"):
        if key in doc and doc[key] is not None:
            setattr(cfg, key, str(doc[key]))
    train = doc.get("train", {})
    _check_keys(train, _TRAIN_KEYS, "train")
    cfg.train_clips = int(train.get("clips", cfg.train_clips))
    cfg.train_steps = int(train.get("steps", cfg.train_steps))
    cfg.batch_size = int(train.get("batch_size", cfg.batch_size))
    cfg.learning_rate = float(train.get("learning_rate", cfg.learning_rate))
    cfg.clip_frames = int(train.get("frames", cfg.clip_frames))
    cfg.velocity_range = (
        float(train.get("velocity_min", cfg.velocity_range[0])),
        float(train.get("velocity_max", cfg.velocity_range[1])),
    )
    cfg.blob_sigma = float(train.get("blob_sigma", cfg.blob_sigma))
    plan = doc.get("plan", {})
    _check_keys(plan, _PLAN_KEYS, "plan")
    cfg.total_steps = int(plan.get("T", cfg.total_steps))
    cfg.gamma = float(plan.get("gamma", cfg.gamma))
    cfg.segments = int(plan.get("K", cfg.segments))
    cfg.segment_frames = int(plan.get("L", cfg.segment_frames))
    cfg.omega = float(plan.get("omega", cfg.omega))
    cfg.shuffle_seed = int(plan.get("shuffle_seed", cfg.shuffle_seed))
    cfg.round_up = bool(plan.get("round_up", cfg.round_up))
    densify = doc.get("densify", {})
    _check_keys(densify, _DENSIFY_KEYS, "densify")
    if densify.get("sigma") is not None:
        cfg.densify_sigma = float(densify["sigma"])
    cfg.densify_threshold = float(densify.get("threshold", cfg.densify_threshold))
    cfg.densify_normalization = str(densify.get("normalization", cfg.densify_normalization))
    refine = doc.get("refine", {})
    _check_keys(refine, _REFINE_KEYS, "refine")
    cfg.refine_iterations = int(refine.get("iterations", cfg.refine_iterations))
    cfg.refine_weight = float(refine.get("smoothing_weight", cfg.refine_weight))
    cfg.preserve_sources = bool(refine.get("preserve_sources", cfg.preserve_sources))
    sample = doc.get("sample", {})
    _check_keys(sample, _SAMPLE_KEYS, "sample")
    cfg.sample_frames = int(sample.get("frames", cfg.sample_frames))
    cfg.frame0_min_psnr = float(sample.get("frame0_min_psnr", cfg.frame0_min_psnr))
    if cfg.width < 4 or cfg.height < 4:
        raise UserInputError("frame dims must be at least 4x4")
    return cfg
