"""Counter-based pseudorandom normal generation.

Noise vectors are never stored: they are regenerated on demand from 64-bit
seeds, so regeneration must be an exactly specified pure function of the
seed. The scheme is fixed as follows:

* word stream: ``word(seed, c) = mix64(seed + (c + 1) * GOLDEN)`` where
  ``mix64`` is the SplitMix64 finalizer and all arithmetic is modulo 2**64;
* uniforms: word pairs ``(w[2j], w[2j+1])`` map to
  ``u1 = ((w >> 11) + 1) * 2**-53`` in (0, 1] and
  ``u2 = (w >> 11) * 2**-53`` in [0, 1);
* normals: Box-Muller with a fixed draw order, the cosine variate first:
  ``z[2j] = sqrt(-2 ln u1) cos(2 pi u2)``, ``z[2j+1] = ... sin(...)``.

A vector of dimension ``d`` consumes exactly ``2 * ceil(d / 2)`` words and
the extra variate of an odd-length vector is discarded. No global state is
involved anywhere, so concurrent regeneration is safe.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

_U64_MASK = (1 << 64) - 1


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, elementwise on a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x


def word_stream(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Words ``start .. start+count-1`` of the stream keyed by ``seed``."""
    ctr = np.arange(start, start + count, dtype=np.uint64) + np.uint64(1)
    return mix64(np.uint64(seed & _U64_MASK) + ctr * GOLDEN)


def derive_seeds(master_seed: int, count: int) -> np.ndarray:
    """Child seeds: the first ``count`` words of the master stream."""
    return word_stream(master_seed, count)


def standard_normals(seeds: np.ndarray, dim: int) -> np.ndarray:
    """Regenerate one standard-normal row of length ``dim`` per seed.

    ``seeds`` is a uint64 array of shape (B,); the result has shape
    (B, dim) and is a pure function of its arguments.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    pairs = (dim + 1) // 2
    ctr = (np.arange(2 * pairs, dtype=np.uint64) + np.uint64(1)) * GOLDEN
    w = mix64(seeds[:, None] + ctr[None, :])
    u1 = ((w[:, 0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (w[:, 1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty((seeds.shape[0], 2 * pairs))
    z[:, 0::2] = r * np.cos(2.0 * np.pi * u2)
    z[:, 1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:, :dim]


def normal_vector(seed: int, dim: int) -> np.ndarray:
    """Single regenerated vector; see :func:`standard_normals`."""
    return standard_normals(np.array([seed], dtype=np.uint64), dim)[0]
