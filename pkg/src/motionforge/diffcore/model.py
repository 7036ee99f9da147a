"""Toy conditioned video denoiser.

A small UNet over the frame stack: per-frame 2D convolutions, one motion
cross-attention block at the coarsest resolution (queries and keys from
the latent features, values from the encoded motion field), one temporal
attention block across frames, and timestep + strength embeddings
concatenated and injected as a per-frame channel bias.  Sized to train on
a single CPU core in minutes.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeMismatchError, UserInputError
from ..fieldcore import FlowField

DEFAULT_ARCH: dict = {
    "img_h": 16,
    "img_w": 16,
    "img_channels": 1,
    "base": 16,
    "mid": 32,
    "coarse": 48,
    "embed_dim": 32,
    "strength_scale": 50.0,
    # beta ramp chosen so the top step is genuinely noise-dominated at T=50
    # (alpha_bar_T ~ 1e-3); a 1000-step-style ramp leaves alpha_bar_T ~ 0.6
    # and the model then never needs its conditioning.
    "schedule": {"total_steps": 50, "beta_start": 2.0e-3, "beta_end": 0.25},
}


def default_arch(**overrides) -> dict:
    arch = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULT_ARCH.items()}
    for key, value in overrides.items():
        if key not in arch:
            raise UserInputError(f"unknown architecture key {key!r}")
        arch[key] = value
    return arch


# ---------------------------------------------------------------------------
# Embeddings and attention in their plain functional form
# ---------------------------------------------------------------------------


def timestep_embedding(value: float, dim: int) -> np.ndarray:
    """Sinusoidal embedding: [sin(v * f_i) ..., cos(v * f_i) ...].

    Frequencies f_i = 10000^(-i/half) for i in 0..half-1; the value 0 maps
    to all-zero sines and all-one cosines.
    """
    if dim < 2 or dim % 2 != 0:
        raise UserInputError(f"embedding dim must be even and >= 2, got {dim}")
    half = dim // 2
    freqs = np.power(10000.0, -np.arange(half, dtype=np.float64) / half)
    angles = value * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)]).astype(np.float64)


def strength_embedding(strength: float, dim: int) -> np.ndarray:
    """Positional embedding of a global motion strength (same family as timesteps)."""
    if strength < 0:
        raise UserInputError(f"motion strength must be >= 0, got {strength}")
    return timestep_embedding(strength, dim)


def motion_cross_attention(
    z: np.ndarray, z_m: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray
) -> np.ndarray:
    """softmax(Q K^T / sqrt(d)) V_m with Q = z wq, K = z wk, V_m = z_m wv.

    z and z_m carry one token per row and must agree in token count; the
    attention weights derive from the latent tokens alone while the values
    come from the motion features.
    """
    z = np.asarray(z, dtype=np.float64)
    z_m = np.asarray(z_m, dtype=np.float64)
    if z.ndim != 2 or z_m.ndim != 2:
        raise ShapeMismatchError("token matrices must be 2-D (tokens, features)")
    if z.shape[0] != z_m.shape[0]:
        raise ShapeMismatchError(
            f"token counts differ: latent {z.shape[0]} vs motion {z_m.shape[0]}"
        )
    q = z @ wq
    k = z @ wk
    v = z_m @ wv
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatchError("query/key projections disagree in width")
    logits = q @ k.T / math.sqrt(q.shape[1])
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


def _torch_sin_embedding(values: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.pow(
        torch.tensor(10000.0, dtype=values.dtype), -torch.arange(half, dtype=values.dtype) / half
    )
    angles = values[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


# ---------------------------------------------------------------------------
# The denoiser module
# ---------------------------------------------------------------------------


class ToyDenoiser(nn.Module):
    def __init__(self, arch: Mapping | None = None):
        super().__init__()
        arch = dict(arch or DEFAULT_ARCH)
        arch["schedule"] = dict(arch["schedule"])
        if arch["img_h"] % 4 or arch["img_w"] % 4 or arch["img_h"] < 4 or arch["img_w"] < 4:
            raise UserInputError("image dims must be multiples of 4 and at least 4")
        self.arch = arch
        c = arch["img_channels"]
        base, mid, coarse = arch["base"], arch["mid"], arch["coarse"]
        self.embed_dim = arch["embed_dim"]

        self.motion_enc1 = nn.Conv2d(2, base, 3, stride=2, padding=1)
        self.motion_enc2 = nn.Conv2d(base, coarse, 3, stride=2, padding=1)

        # inputs per frame: noised frame, reference frame, and the two
        # displacement planes at full resolution (the coarse motion features
        # additionally feed the cross-attention block below)
        self.enc_in = nn.Conv2d(2 * c + 2, base, 3, padding=1)
        self.gn_e = nn.GroupNorm(4, base)
        self.down1 = nn.Conv2d(base, mid, 3, stride=2, padding=1)
        self.gn_1 = nn.GroupNorm(4, mid)
        self.down2 = nn.Conv2d(mid, coarse, 3, stride=2, padding=1)
        self.gn_2 = nn.GroupNorm(4, coarse)

        self.emb_in = nn.Linear(3 * self.embed_dim, 2 * coarse)
        self.emb_out = nn.Linear(2 * coarse, coarse)

        self.ln_m = nn.LayerNorm(coarse)
        self.ln_v = nn.LayerNorm(coarse)   # motion tokens are small; normalize before projecting
        self.wq = nn.Linear(coarse, coarse, bias=False)
        self.wk = nn.Linear(coarse, coarse, bias=False)
        self.wv = nn.Linear(coarse, coarse, bias=False)
        self.attn_out = nn.Linear(coarse, coarse)

        self.ln_t = nn.LayerNorm(coarse)
        self.tq = nn.Linear(coarse, coarse, bias=False)
        self.tk = nn.Linear(coarse, coarse, bias=False)
        self.tv = nn.Linear(coarse, coarse, bias=False)
        self.temp_out = nn.Linear(coarse, coarse)

        self.dec2 = nn.Conv2d(coarse + mid, mid, 3, padding=1)
        self.gn_d2 = nn.GroupNorm(4, mid)
        self.dec1 = nn.Conv2d(mid + base, base, 3, padding=1)
        self.gn_d1 = nn.GroupNorm(4, base)
        self.out_conv = nn.Conv2d(base, c, 3, padding=1)

    # -- conditioning encoders ------------------------------------------------

    def encode_motion_tensor(self, fields: torch.Tensor) -> torch.Tensor:
        """(B, 2, H, W) displacement planes -> (B, coarse, H/4, W/4) features."""
        if fields.shape[-1] % 4 or fields.shape[-2] % 4 or min(fields.shape[-2:]) < 4:
            raise UserInputError(
                f"field {fields.shape[-1]}x{fields.shape[-2]} smaller than the encoder footprint"
            )
        return self.motion_enc2(F.silu(self.motion_enc1(fields)))

    def encode_motion(self, flow: FlowField) -> np.ndarray:
        """Strided convolutional encoding of one flow field; dims shrink by 4."""
        tensor = torch.from_numpy(np.ascontiguousarray(flow.data.transpose(2, 0, 1)))
        with torch.no_grad():
            out = self.encode_motion_tensor(tensor[None])
        return out[0].numpy()

    # -- forward ----------------------------------------------------------------

    def forward(
        self,
        z: torch.Tensor,
        t: torch.Tensor,
        field: torch.Tensor,
        strength: torch.Tensor,
        ref: torch.Tensor,
    ) -> torch.Tensor:
        """Predict the injected noise for a batch of noised clips.

        z (B, L, C, H, W); t (B,) timesteps; field (B, 2, H, W); strength
        (B,); ref (B, C, H, W).
        """
        if z.ndim != 5:
            raise ShapeMismatchError(f"z must be (B, L, C, H, W), got {tuple(z.shape)}")
        bsz, length, c, h, w = z.shape
        coarse = self.arch["coarse"]

        x = torch.cat(
            [
                z,
                ref[:, None].expand(bsz, length, c, h, w),
                field[:, None].expand(bsz, length, 2, h, w),
            ],
            dim=2,
        )
        x = x.reshape(bsz * length, 2 * c + 2, h, w)
        h1 = F.silu(self.gn_e(self.enc_in(x)))
        h2 = F.silu(self.gn_1(self.down1(h1)))
        h3 = F.silu(self.gn_2(self.down2(h2)))

        t_emb = _torch_sin_embedding(t.to(z.dtype), self.embed_dim)
        s_emb = _torch_sin_embedding(strength.to(z.dtype) * self.arch["strength_scale"], self.embed_dim)
        f_emb = _torch_sin_embedding(torch.arange(length, dtype=z.dtype), self.embed_dim)
        emb = torch.cat(
            [
                t_emb[:, None, :].expand(bsz, length, self.embed_dim),
                s_emb[:, None, :].expand(bsz, length, self.embed_dim),
                f_emb[None, :, :].expand(bsz, length, self.embed_dim),
            ],
            dim=2,
        )
        bias = self.emb_out(F.silu(self.emb_in(emb)))
        h3 = h3 + bias.reshape(bsz * length, coarse)[:, :, None, None]

        z_m = self.encode_motion_tensor(field)
        h4, w4 = h3.shape[-2:]
        tokens = h3.reshape(bsz, length, coarse, h4 * w4).permute(0, 1, 3, 2)
        m_tokens = z_m.reshape(bsz, coarse, h4 * w4).permute(0, 2, 1)
        normed = self.ln_m(tokens)
        q = self.wq(normed)
        k = self.wk(normed)
        v = self.wv(self.ln_v(m_tokens))[:, None].expand(bsz, length, h4 * w4, coarse)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(coarse), dim=-1)
        tokens = tokens + self.attn_out(attn @ v)

        if length > 1:
            frames = tokens.permute(0, 2, 1, 3)  # (B, S, L, coarse)
            normed = self.ln_t(frames)
            q = self.tq(normed)
            k = self.tk(normed)
            v = self.tv(normed)
            attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(coarse), dim=-1)
            frames = frames + self.temp_out(attn @ v)
            tokens = frames.permute(0, 2, 1, 3)

        h3 = tokens.permute(0, 1, 3, 2).reshape(bsz * length, coarse, h4, w4)
        up2 = F.interpolate(h3, scale_factor=2, mode="nearest")
        d2 = F.silu(self.gn_d2(self.dec2(torch.cat([up2, h2], dim=1))))
        up1 = F.interpolate(d2, scale_factor=2, mode="nearest")
        d1 = F.silu(self.gn_d1(self.dec1(torch.cat([up1, h1], dim=1))))
        return self.out_conv(d1).reshape(bsz, length, c, h, w)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(arch: Mapping | None = None, init_seed: int = 0) -> ToyDenoiser:
    """Construct a ToyDenoiser with a deterministic parameter initialization."""
    torch.manual_seed(init_seed)
    return ToyDenoiser(arch)


def encode_motion(model: ToyDenoiser, flow: FlowField) -> np.ndarray:
    return model.encode_motion(flow)
