"""motionforge: arrow-driven motion fields, a toy conditioned video denoiser,
and a phased long-video sampler, with a CLI and a local HTTP service."""

from .fieldcore import (
    FlowField,
    Frame,
    MotionFields,
    advect_frame,
    flow_to_color,
    motion_strength,
    read_flo,
    warp_coords,
    write_flo,
)
from .sparsectl import (
    ArrowSet,
    ArrowSpec,
    DensifyParams,
    RefineParams,
    arrows_to_refined,
    densify,
    parse_arrow_spec,
    refine,
    serialize_arrow_spec,
    sparse_field_from_arrows,
)
from .evalkit import SyntheticSpec, gen_synthetic, psnr, ssim, temporal_consistency
from .diffcore import (
    Conditioning,
    DenoiserWeights,
    NoiseSchedule,
    forward_noise,
    make_schedule,
    sample_clip,
    train,
)
from .longgen import (
    NoiseBank,
    SamplerPlan,
    build_noise_bank,
    denoiser_eval_count,
    plan_phases,
    sample_long,
    sample_long_naive,
    shared_noise,
)

__version__ = "0.1.0"
