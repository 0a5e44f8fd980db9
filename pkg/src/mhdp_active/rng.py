"""Seed derivation and the uniform stream shared with the compiled kernels.

Two generators are used across the package and recorded in output metadata:

* ``numpy-pcg64`` -- numpy's default PCG64 generator, used for corpus
  generation and other vectorized sampling.
* ``splitmix64`` -- a small counter-free stream used inside the compiled
  Gibbs kernels, where every unit of work owns a stream derived from
  (seed, indices) so parallel and sequential execution are bit-identical.
"""
from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

DATASET_RNG_ID = "numpy-pcg64"
SAMPLER_RNG_ID = "splitmix64"


def mix64(z: int) -> int:
    """The splitmix64 output avalanche on a 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, *indices: int) -> int:
    """Fold integer indices into a base seed, one avalanche per index.

    Used everywhere a sub-task needs its own stream: chains, planner
    rounds, experiment units. Deterministic and platform-independent.
    """
    state = mix64((base + _GOLDEN) & _MASK64)
    for ix in indices:
        state = mix64(state ^ mix64((int(ix) * 0xD1342543DE82EF95 + _GOLDEN) & _MASK64))
    return state


def kernel_seed(seed: int):
    """Mask a derived seed into the uint64 scalar the compiled kernels take."""
    import numpy as np

    return np.uint64(seed & _MASK64)


def splitmix64_uniforms(seed: int, n: int) -> list[float]:
    """Reference stream in pure Python; mirrors the kernel implementation."""
    state = seed & _MASK64
    out = []
    for _ in range(n):
        state = (state + _GOLDEN) & _MASK64
        out.append((mix64(state) >> 11) * (1.0 / 9007199254740992.0))
    return out
