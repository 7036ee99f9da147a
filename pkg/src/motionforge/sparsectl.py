"""User arrows to dense motion fields.

Pipeline: arrows -> sparse flow (displacement at each arrow start) ->
Gaussian-distance-weighted densification with a magnitude cutoff ->
deterministic smoothing refinement.  The refinement stage stands in for a
learned pixel-to-pixel model behind the same call shape, so a trained
model can be dropped in later.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, UserInputError
from .fieldcore import FlowField

NORM_PIXELS = "pixels"
NORM_FRAME_FRACTION = "frame-fraction"

REFERENCE_SIGMA = 170.0        # tuned at 512x512; scaled by frame diagonal
REFERENCE_DIAGONAL = math.hypot(512.0, 512.0)
DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class ArrowSpec:
    """One gesture: pixel start/end and a nonnegative strength multiplier."""

    start: tuple[int, int]
    end: tuple[int, int]
    strength: float = 1.0

    def __post_init__(self) -> None:
        start = (int(self.start[0]), int(self.start[1]))
        end = (int(self.end[0]), int(self.end[1]))
        if start == end:
            raise UserInputError(f"arrow start and end coincide at {start}")
        if self.strength < 0:
            raise UserInputError(f"arrow strength must be >= 0, got {self.strength}")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "strength", float(self.strength))

    def displacement(self) -> tuple[float, float]:
        return (
            (self.end[0] - self.start[0]) * self.strength,
            (self.end[1] - self.start[1]) * self.strength,
        )


@dataclass(frozen=True)
class DensifyParams:
    sigma: float
    threshold: float = DEFAULT_THRESHOLD
    normalization: str = NORM_FRAME_FRACTION

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise UserInputError(f"sigma must be > 0, got {self.sigma}")
        if self.threshold < 0:
            raise UserInputError(f"threshold must be >= 0, got {self.threshold}")
        if self.normalization not in (NORM_PIXELS, NORM_FRAME_FRACTION):
            raise UserInputError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class RefineParams:
    iterations: int = 8
    smoothing_weight: float = 0.5
    preserve_sources: bool = True

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise UserInputError("iterations must be >= 0")
        if not (0.0 < self.smoothing_weight <= 1.0):
            raise UserInputError("smoothing_weight must lie in (0, 1]")


def default_sigma(width: int, height: int) -> float:
    """Interpolation radius proportional to frame size (reference 170 at 512^2)."""
    return REFERENCE_SIGMA * math.hypot(width, height) / REFERENCE_DIAGONAL


def default_densify_params(width: int, height: int) -> DensifyParams:
    return DensifyParams(sigma=default_sigma(width, height))


def validate_arrows(arrows: Sequence[ArrowSpec], width: int, height: int) -> None:
    seen: set[tuple[int, int]] = set()
    for arrow in arrows:
        for name, point in (("start", arrow.start), ("end", arrow.end)):
            x, y = point
            if not (0 <= x < width and 0 <= y < height):
                raise UserInputError(
                    f"arrow {name} {point} outside {width}x{height} frame"
                )
        if arrow.start in seen:
            raise UserInputError(f"duplicate start pixel {arrow.start}")
        seen.add(arrow.start)


def sparse_field_from_arrows(
    arrows: Sequence[ArrowSpec], width: int, height: int
) -> FlowField:
    """Sparse flow: (end - start) * strength at every arrow start, zero elsewhere."""
    validate_arrows(arrows, width, height)
    data = np.zeros((height, width, 2), dtype=np.float32)
    for arrow in arrows:
        x, y = arrow.start
        data[y, x] = arrow.displacement()
    return FlowField(data)


def densify(sparse: FlowField, params: DensifyParams) -> FlowField:
    """Spread sparse vectors with Gaussian distance weights, then cut off.

    Each query pixel accumulates sum over nonzero source pixels of
    exp(-(D/sigma)^2) * source vector, D the Euclidean pixel distance.
    Accumulated vectors whose magnitude does not exceed the threshold
    (measured in pixels, or as a fraction of the frame diagonal) are zeroed.
    Summation order is fixed by source scan order, so results do not depend
    on any internal parallelism.
    """
    h, w = sparse.height, sparse.width
    src_mask = np.any(sparse.data != 0, axis=2)
    ys, xs = np.nonzero(src_mask)
    dense = np.zeros((h, w, 2), dtype=np.float64)
    if len(xs) > 0:
        qy, qx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
        inv_sigma2 = 1.0 / (params.sigma * params.sigma)
        for sy, sx in zip(ys, xs):
            d2 = (qx - sx) ** 2 + (qy - sy) ** 2
            weight = np.exp(-d2 * inv_sigma2)
            dense += weight[..., None] * sparse.data[sy, sx].astype(np.float64)
    cutoff = params.threshold
    if params.normalization == NORM_FRAME_FRACTION:
        cutoff = params.threshold * math.hypot(w, h)
    magnitude = np.hypot(dense[..., 0], dense[..., 1])
    dense[magnitude <= cutoff] = 0.0
    return FlowField(dense.astype(np.float32))


def refine(
    dense: FlowField,
    params: RefineParams,
    sources: Iterable[tuple[int, int]] = (),
) -> FlowField:
    """Smoothing stand-in for the learned flow refinement stage.

    Runs `iterations` rounds of weighted 4-neighbor averaging
    (out = (1 - w) * f + w * mean of the 4 neighbors, edges clamped).  With
    preserve_sources, the values at the given source pixels are reasserted
    after every round so gesture pixels keep their exact displacement.
    """
    field = dense.data.astype(np.float64)
    src = list(sources) if params.preserve_sources else []
    pinned = [(x, y, field[y, x].copy()) for x, y in src]
    w = params.smoothing_weight
    for _ in range(params.iterations):
        padded = np.pad(field, ((1, 1), (1, 1), (0, 0)), mode="edge")
        neighbor_mean = (
            padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
        ) / 4.0
        field = (1.0 - w) * field + w * neighbor_mean
        for x, y, value in pinned:
            field[y, x] = value
    return FlowField(field.astype(np.float32))


def arrows_to_refined(
    arrows: Sequence[ArrowSpec],
    width: int,
    height: int,
    densify_params: DensifyParams | None = None,
    refine_params: RefineParams | None = None,
) -> FlowField:
    """Full arrow pipeline: sparse field -> densify -> refine.  Deterministic."""
    densify_params = densify_params or default_densify_params(width, height)
    refine_params = refine_params or RefineParams()
    sparse = sparse_field_from_arrows(arrows, width, height)
    dense = densify(sparse, densify_params)
    return refine(dense, refine_params, sources=[a.start for a in arrows])


# ---------------------------------------------------------------------------
# Arrow-spec JSON document (shared verbatim with the flow-studio UI)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArrowSet:
    """Parsed arrow-spec document: frame dims, global strength, gestures."""

    width: int
    height: int
    global_strength: float
    arrows: tuple[ArrowSpec, ...]

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise UserInputError(f"nonpositive frame dims {self.width}x{self.height}")
        if self.global_strength < 0:
            raise UserInputError("global_strength must be >= 0")
        validate_arrows(self.arrows, self.width, self.height)
        object.__setattr__(self, "arrows", tuple(self.arrows))


_TOP_KEYS = {"width", "height", "global_strength", "arrows"}
_ARROW_KEYS = {"start", "end", "strength"}


def parse_arrow_spec(doc: str | bytes | dict) -> ArrowSet:
    """Strict parser for the arrow-spec JSON document; unknown keys rejected."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise FormatError(f"arrow spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("arrow spec must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise FormatError(f"unknown arrow-spec keys: {sorted(unknown)}")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise FormatError(f"missing arrow-spec keys: {sorted(missing)}")
    if not isinstance(doc["arrows"], list):
        raise FormatError("arrows must be a JSON array")
    arrows = []
    for i, entry in enumerate(doc["arrows"]):
        if not isinstance(entry, dict):
            raise FormatError(f"arrow #{i} must be a JSON object")
        unknown = set(entry) - _ARROW_KEYS
        if unknown:
            raise FormatError(f"arrow #{i} has unknown keys: {sorted(unknown)}")
        if "start" not in entry or "end" not in entry:
            raise FormatError(f"arrow #{i} needs start and end")
        start, end = entry["start"], entry["end"]
        for name, point in (("start", start), ("end", end)):
            if (
                not isinstance(point, list)
                or len(point) != 2
                or not all(isinstance(c, (int, float)) for c in point)
            ):
                raise FormatError(f"arrow #{i} {name} must be [x, y]")
        try:
            # fractional endpoints round to the nearest pixel, matching the
            # drawing UI's canvas-to-pixel mapping
            arrows.append(
                ArrowSpec(
                    start=(round(start[0]), round(start[1])),
                    end=(round(end[0]), round(end[1])),
                    strength=float(entry.get("strength", 1.0)),
                )
            )
        except UserInputError as exc:
            raise UserInputError(f"arrow #{i}: {exc}") from exc
    try:
        width = int(doc["width"])
        height = int(doc["height"])
        global_strength = float(doc["global_strength"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad arrow-spec scalar field: {exc}") from exc
    return ArrowSet(width=width, height=height, global_strength=global_strength, arrows=tuple(arrows))


def serialize_arrow_spec(spec: ArrowSet) -> dict:
    return {
        "width": spec.width,
        "height": spec.height,
        "global_strength": spec.global_strength,
        "arrows": [
            {
                "start": [a.start[0], a.start[1]],
                "end": [a.end[0], a.end[1]],
                "strength": a.strength,
            }
            for a in spec.arrows
        ],
    }


def arrow_spec_json(spec: ArrowSet) -> str:
    return json.dumps(serialize_arrow_spec(spec), indent=2)
