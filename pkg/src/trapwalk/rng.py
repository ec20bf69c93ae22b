"""Counter-based hashing used for every random quantity in the package.

All randomness is a pure function of ``(key, counter)``: site states are keyed
by packed lattice coordinates, skeleton steps and holding exponentials by the
step index.  Nothing depends on call order, so paths can be replayed from any
checkpoint and results do not depend on how replicas are scheduled.

The mixer is the SplitMix64 finalizer.  A scalar (pure Python int) and a
vectorized (numpy uint64) version are provided and must agree bit for bit.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)

# stream tags
SITE = 0x5171E
SKELETON = 0x5EE1E7
HOLDING = 0xE1E1E
ENV_SEED = 0xE4F
WALK_SEED = 0x3A1C


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def hash_words(*words: int) -> int:
    """Absorb a sequence of 64-bit words into one well-mixed 64-bit value."""
    h = 0x243F6A8885A308D3
    for w in words:
        h = mix64((h ^ (w & MASK64)) + GOLDEN)
    return h


def stream_key(seed: int, tag: int) -> int:
    return hash_words(seed, tag)


def derive_seed(master: int, index: int, tag: int) -> int:
    """Seed for replica ``index`` and stream ``tag`` under ``master``."""
    return hash_words(master, index, tag)


def counter_hash(key: int, counter: int) -> int:
    # mix64 inlined twice; this sits on the scalar cluster-exploration path
    z = (counter + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    z = key ^ z ^ (z >> 31)
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def counter_uniform(key: int, counter: int) -> float:
    """Uniform on [0, 1) with 53 bits."""
    return (counter_hash(key, counter) >> 11) * _INV53


# -- vectorized ------------------------------------------------------------

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_NM1 = np.uint64(_M1)
_NM2 = np.uint64(_M2)
_NGOLDEN = np.uint64(GOLDEN)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U30)) * _NM1
        z = (z ^ (z >> _U27)) * _NM2
    return z ^ (z >> _U31)


def counter_hash_array(key: int, counters) -> np.ndarray:
    c = np.asarray(counters).astype(np.uint64)
    with np.errstate(over="ignore"):
        inner = mix64_array(c + _NGOLDEN)
    return mix64_array(np.uint64(key & MASK64) ^ inner)


def counter_uniform_array(key: int, counters) -> np.ndarray:
    """Uniforms on [0, 1), one per counter."""
    h = counter_hash_array(key, counters)
    return (h >> _U11).astype(np.float64) * _INV53


def counter_exponential_array(key: int, counters) -> np.ndarray:
    """Mean-one exponentials by inverse CDF; strictly positive and finite."""
    h = counter_hash_array(key, counters)
    u = ((h >> _U11).astype(np.float64) + 0.5) * _INV53
    return -np.log(u)


def derive_seeds(master: int, indices, tag: int) -> np.ndarray:
    """Vectorized :func:`derive_seed` over replica indices (uint64 array)."""
    idx = np.asarray(indices).astype(np.uint64)
    h0 = np.uint64(hash_words(master))
    with np.errstate(over="ignore"):
        h = mix64_array((h0 ^ idx) + _NGOLDEN)
        h = mix64_array((h ^ np.uint64(tag & MASK64)) + _NGOLDEN)
    return h
