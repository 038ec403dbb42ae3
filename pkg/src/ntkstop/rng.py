"""Seeded random streams.

All randomness in the package goes through :func:`stream`, which builds a
Philox (64-bit, counter-based) generator keyed by ``(seed, tag)``.  Distinct
tags give independent streams, so adding draws to one component never shifts
the numbers seen by another.  Gaussian variates use the Box-Muller transform
on the generator's uniforms rather than numpy's ziggurat sampler.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence([int(seed), _tag_word(tag)])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(*words: int) -> int:
    """Hash a tuple of nonnegative integers into a 63-bit seed."""
    state = np.random.SeedSequence([int(w) for w in words]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def uniform(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.random(shape)


def gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via Box-Muller."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    size = int(np.prod(shape, dtype=np.int64))
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1], keeps log finite
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * half)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:size].reshape(shape)


def signs(rng: np.random.Generator, size: int) -> np.ndarray:
    """Rademacher +-1 draws."""
    return np.where(rng.random(size) < 0.5, -1.0, 1.0)
