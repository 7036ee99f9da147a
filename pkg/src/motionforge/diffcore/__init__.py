from .schedule import NoiseSchedule, forward_noise, make_schedule
from .conditioning import Conditioning
from .model import (
    ToyDenoiser,
    build_model,
    default_arch,
    encode_motion,
    motion_cross_attention,
    strength_embedding,
    timestep_embedding,
)
from .checkpoint import DenoiserWeights, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainingClip, make_blob_dataset, train, training_loss
from .sampling import denoise_step, sample_clip

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "forward_noise",
    "Conditioning",
    "ToyDenoiser",
    "build_model",
    "default_arch",
    "encode_motion",
    "motion_cross_attention",
    "strength_embedding",
    "timestep_embedding",
    "DenoiserWeights",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "TrainingClip",
    "make_blob_dataset",
    "train",
    "training_loss",
    "denoise_step",
    "sample_clip",
]
