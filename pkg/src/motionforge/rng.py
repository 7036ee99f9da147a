"""Seeded random streams shared across the library.

Every stochastic operation draws from a keyed Philox4x64-10 counter-based
generator so that results are reproducible from (inputs, seed) and integer
draws (shuffles) are portable across platforms.
"""

from __future__ import annotations

import numpy as np

PRNG_NAME = "philox4x64-10"
PRNG_VERSION = 1

# Stream ids keep independent purposes on independent key paths.
STREAM_INIT = 0        # chain initialisation noise
STREAM_STEP = 1        # per-step ancestral injection noise
STREAM_BANK = 2        # noise-bank randomness blended on top of the shared base
STREAM_SHUFFLE = 3     # noise-bank permutation
STREAM_SEGMENT = 10    # parent for per-segment derived seeds (naive chaining)
STREAM_SHARED = 4      # standalone shared-noise op draws
STREAM_TRAIN = 5       # training batch/timestep/noise draws


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the (seed, key-path) stream; same arguments, same draws."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Stable 63-bit child seed for APIs that take a plain integer seed."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def normal(gen: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Standard-normal float32 tensor from a stream."""
    return gen.standard_normal(size=shape, dtype=np.float32)
