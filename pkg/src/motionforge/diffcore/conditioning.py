"""Conditioning bundle consumed by the denoiser."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ShapeMismatchError, UserInputError
from ..fieldcore import FlowField, Frame


@dataclass(frozen=True)
class Conditioning:
    """Everything the denoiser is conditioned on for one clip.

    motion_field may be None to drop the flow pathway (the strength and
    reference pathways stay active), matching the conditioning dropout
    used during training.
    """

    reference_frame: Frame
    motion_field: FlowField | None = None
    global_strength: float = 0.0
    object_strengths: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.global_strength < 0:
            raise UserInputError("global_strength must be >= 0")
        if any(s < 0 for s in self.object_strengths):
            raise UserInputError("object strengths must be >= 0")
        if self.motion_field is not None:
            f, r = self.motion_field, self.reference_frame
            if (f.width, f.height) != (r.width, r.height):
                raise ShapeMismatchError(
                    f"motion field {f.width}x{f.height} vs reference {r.width}x{r.height}"
                )
        object.__setattr__(self, "object_strengths", tuple(float(s) for s in self.object_strengths))
