"""Noise schedule and the forward noising process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError, UserInputError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise coefficients and their cumulative signal products.

    betas[t-1] is the step-t noise coefficient; alpha_bars[t-1] is the
    product of (1 - beta_i) for i <= t, strictly decreasing in t.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=np.float64)
        bars = np.asarray(self.alpha_bars, dtype=np.float64)
        if betas.ndim != 1 or bars.shape != betas.shape or betas.size < 1:
            raise ShapeMismatchError("betas and alpha_bars must be equal-length 1-D arrays")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise UserInputError("betas must lie strictly inside (0, 1)")
        if np.any(np.diff(bars) >= 0):
            raise UserInputError("alpha_bars must be strictly decreasing")
        expected = np.cumprod(1.0 - betas)
        if not np.allclose(bars, expected, rtol=1e-12, atol=0):
            raise UserInputError("alpha_bars do not match the running product of (1 - beta)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", bars)

    @property
    def total_steps(self) -> int:
        return self.betas.size

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        return 1.0 - self.beta(t)

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal product; alpha_bar(0) == 1 by convention."""
        if t == 0:
            return 1.0
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def _check_t(self, t: int) -> None:
        if not (1 <= t <= self.total_steps):
            raise UserInputError(f"timestep {t} outside 1..{self.total_steps}")


def make_schedule(total_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta ramp with the running-product cumulative signal table."""
    if total_steps < 1:
        raise UserInputError(f"need at least one timestep, got {total_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise UserInputError(
            f"betas must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, total_steps, dtype=np.float64)
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars)


def forward_noise(z0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Noise a clean tensor to level t: sqrt(a_bar_t) * z0 + sqrt(1 - a_bar_t) * eps."""
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ShapeMismatchError(f"z0 {z0.shape} vs eps {eps.shape}")
    if not (1 <= t <= schedule.total_steps):
        raise UserInputError(f"timestep {t} outside 1..{schedule.total_steps}")
    a_bar = schedule.alpha_bar(t)
    out = np.sqrt(a_bar) * z0.astype(np.float64) + np.sqrt(1.0 - a_bar) * eps.astype(np.float64)
    return out.astype(z0.dtype if z0.dtype.kind == "f" else np.float64)
