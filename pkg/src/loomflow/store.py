"""Seed-backed noise caches and the persistent data-to-noise assignments.

A store owns an n x k table of 64-bit seeds (k noise caches per data point)
plus one permutation per cache level. Noise vectors are regenerated from
seeds on every access (see :mod:`loomflow.rng`), so the on-disk footprint
is O(n * k) regardless of the noise dimension.

File format (little-endian):
    magic "LOOMNS01" | n: u64 | k: u64 | dim: u64 | master_seed: u64
    | seeds: n*k x u64, row-major | assignments: k x n x u32
The loader rejects bad magic, wrong payload size, and any cache whose
index table is not a bijection.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .ot import Assignment, validate_bijection

MAGIC = b"LOOMNS01"
_HEADER = struct.Struct("<8sQQQQ")


class StoreFormatError(ValueError):
    """Raised when a store file fails validation on load."""


@dataclass(frozen=True)
class NoiseRef:
    """Address of one cached noise vector: slot < n, cache < k."""

    slot: int
    cache: int


class NoiseStore:
    def __init__(
        self,
        n: int,
        k: int,
        dim: int,
        master_seed: int,
        seeds: np.ndarray,
        assignments: np.ndarray,
    ):
        if n < 1 or k < 1 or dim < 1:
            raise ValueError("n, k and dim must all be >= 1")
        self.n = n
        self.k = k
        self.dim = dim
        self.master_seed = master_seed
        self.seeds = np.ascontiguousarray(seeds, dtype=np.uint64).reshape(n, k)
        self.assignments = np.ascontiguousarray(
            assignments, dtype=np.int64
        ).reshape(k, n)
        for c in range(k):
            validate_bijection(self.assignments[c])

    @classmethod
    def create(cls, n: int, k: int, dim: int, master_seed: int) -> "NoiseStore":
        """Fresh store: derived seeds, every cache assignment = identity."""
        seeds = rng.derive_seeds(master_seed, n * k).reshape(n, k)
        assignments = np.tile(np.arange(n, dtype=np.int64), (k, 1))
        return cls(n, k, dim, master_seed, seeds, assignments)

    # -- noise access -------------------------------------------------------

    def get_noise(self, ref: NoiseRef) -> np.ndarray:
        if not (0 <= ref.slot < self.n and 0 <= ref.cache < self.k):
            raise IndexError(f"noise ref out of range: {ref}")
        return rng.normal_vector(int(self.seeds[ref.slot, ref.cache]), self.dim)

    def noise_rows(self, slots: np.ndarray, cache: int) -> np.ndarray:
        """Regenerated noise for many slots of one cache level, shape (m, dim)."""
        slots = np.asarray(slots, dtype=np.int64)
        if slots.size and (slots.min() < 0 or slots.max() >= self.n):
            raise IndexError("slot index out of range")
        if not 0 <= cache < self.k:
            raise IndexError("cache index out of range")
        return rng.standard_normals(self.seeds[slots, cache], self.dim)

    def all_noise(self, cache: int) -> np.ndarray:
        return self.noise_rows(np.arange(self.n), cache)

    # -- assignment access --------------------------------------------------

    def assignment(self, cache: int) -> Assignment:
        return Assignment(self.assignments[cache].copy())

    def assigned_slots(self, indices: np.ndarray, cache: int) -> np.ndarray:
        return self.assignments[cache, np.asarray(indices, dtype=np.int64)]

    def swap_slots(self, cache: int, i: int, j: int) -> None:
        """Exchange the noise slots assigned to data points i and j."""
        if not 0 <= cache < self.k:
            raise IndexError("cache index out of range")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError("data index out of range")
        row = self.assignments[cache]
        row[i], row[j] = row[j], row[i]

    def apply_local_permutation(
        self, cache: int, positions: np.ndarray, perm: np.ndarray
    ) -> None:
        """Set tau[positions[a]] <- tau[positions[perm[a]]] via slot swaps.

        ``perm`` is a permutation of range(len(positions)); decomposing it
        into transpositions keeps every intermediate state a bijection.
        """
        positions = np.asarray(positions, dtype=np.int64)
        perm = np.asarray(perm, dtype=np.int64)
        m = positions.shape[0]
        seen = np.zeros(m, dtype=bool)
        for s in range(m):
            if seen[s] or perm[s] == s:
                seen[s] = True
                continue
            a = s
            while not seen[a]:
                seen[a] = True
                nxt = perm[a]
                if not seen[nxt]:
                    self.swap_slots(cache, int(positions[a]), int(positions[nxt]))
                a = nxt

    # -- serialization ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(
                _HEADER.pack(MAGIC, self.n, self.k, self.dim, self.master_seed)
            )
            fh.write(self.seeds.astype("<u8").tobytes())
            fh.write(self.assignments.astype("<u4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "NoiseStore":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise StoreFormatError("file too short for header")
        magic, n, k, dim, master_seed = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise StoreFormatError(f"bad magic {magic!r}")
        expect = _HEADER.size + n * k * 8 + k * n * 4
        if len(raw) != expect:
            raise StoreFormatError(
                f"payload size mismatch: expected {expect} bytes, got {len(raw)}"
            )
        off = _HEADER.size
        seeds = np.frombuffer(raw, dtype="<u8", count=n * k, offset=off)
        off += n * k * 8
        assignments = np.frombuffer(raw, dtype="<u4", count=k * n, offset=off)
        if assignments.size and assignments.max() >= n:
            raise StoreFormatError("assignment index out of range")
        try:
            return cls(
                n,
                k,
                dim,
                master_seed,
                seeds.reshape(n, k),
                assignments.astype(np.int64).reshape(k, n),
            )
        except ValueError as exc:
            raise StoreFormatError(str(exc)) from exc

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, NoiseStore)
            and (self.n, self.k, self.dim, self.master_seed)
            == (other.n, other.k, other.dim, other.master_seed)
            and np.array_equal(self.seeds, other.seeds)
            and np.array_equal(self.assignments, other.assignments)
        )
