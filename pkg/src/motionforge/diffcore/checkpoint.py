"""Versioned binary weight checkpoints.

Layout: magic, format version, training seed, sha-256 of the canonical
architecture JSON, a JSON meta block (architecture, tensor order, flags),
then the flat little-endian float32 parameter payload.  Loading recomputes
the architecture hash and rejects any mismatch.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import FormatError, StateError
from .model import ToyDenoiser, build_model

CHECKPOINT_MAGIC = b"MFCK"
CHECKPOINT_VERSION = 1


def arch_hash(arch: dict) -> bytes:
    canonical = json.dumps(arch, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(canonical).digest()


@dataclass
class DenoiserWeights:
    """Opaque parameter bundle plus the metadata needed to rebuild the model."""

    arch: dict
    state: dict[str, np.ndarray]
    seed: int
    trained: bool = False
    version: int = CHECKPOINT_VERSION
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_model(
        cls, model: ToyDenoiser, seed: int, trained: bool = False, extra: dict | None = None
    ) -> "DenoiserWeights":
        state = {
            name: tensor.detach().cpu().numpy().astype(np.float32)
            for name, tensor in model.state_dict().items()
        }
        return cls(arch=model.arch, state=state, seed=seed, trained=trained, extra=dict(extra or {}))

    def to_model(self) -> ToyDenoiser:
        model = build_model(self.arch, init_seed=0)
        tensors = {name: torch.from_numpy(arr.copy()) for name, arr in self.state.items()}
        model.load_state_dict(tensors)
        model.eval()
        return model

    def parameter_count(self) -> int:
        return int(sum(arr.size for arr in self.state.values()))


def save_checkpoint(weights: DenoiserWeights, path) -> None:
    meta = {
        "arch": weights.arch,
        "trained": weights.trained,
        "tensors": [[name, list(arr.shape)] for name, arr in weights.state.items()],
        "extra": weights.extra,
    }
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for arr in weights.state.values()
    )
    count = weights.parameter_count()
    with open(path, "wb") as sink:
        sink.write(CHECKPOINT_MAGIC)
        sink.write(struct.pack("<I", weights.version))
        sink.write(struct.pack("<q", weights.seed))
        sink.write(arch_hash(weights.arch))
        sink.write(struct.pack("<I", len(meta_blob)))
        sink.write(meta_blob)
        sink.write(struct.pack("<Q", count))
        sink.write(payload)


def load_checkpoint(path) -> DenoiserWeights:
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 4 + 8 + 32 + 4:
        raise FormatError("checkpoint shorter than its fixed header")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise StateError(f"unsupported checkpoint version {version}")
    (seed,) = struct.unpack_from("<q", raw, 8)
    stored_hash = raw[16:48]
    (meta_len,) = struct.unpack_from("<I", raw, 48)
    meta_start = 52
    meta_end = meta_start + meta_len
    if len(raw) < meta_end + 8:
        raise FormatError("truncated checkpoint meta block")
    try:
        meta = json.loads(raw[meta_start:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint meta: {exc}") from exc
    if arch_hash(meta["arch"]) != stored_hash:
        raise StateError("architecture hash mismatch: checkpoint does not match its meta")
    (count,) = struct.unpack_from("<Q", raw, meta_end)
    payload = raw[meta_end + 8 :]
    if len(payload) != count * 4:
        raise FormatError(
            f"checkpoint payload holds {len(payload)} bytes, expected {count * 4}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    state: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in meta["tensors"]:
        size = int(np.prod(shape)) if shape else 1
        state[name] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    if offset != count:
        raise FormatError("tensor table does not cover the parameter payload")
    return DenoiserWeights(
        arch=meta["arch"],
        state=state,
        seed=seed,
        trained=bool(meta["trained"]),
        version=version,
        extra=dict(meta.get("extra", {})),
    )


def checkpoint_file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
