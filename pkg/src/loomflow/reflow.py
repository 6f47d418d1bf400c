"""Retraining on the deterministic coupling induced by a trained model.

A trained field maps noise z to samples g(z); the pairs (z, g(z)) form a
coupling whose transport cost is no larger than that of the coupling used
for the first training. Training a fresh field on these fixed pairs
(no per-batch matching) straightens the sampling paths further.

Pair file format (little-endian): magic "LOOMRF01" | n: u64 | d: u64 |
noise matrix | generated matrix, both n x d float64 row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coupling import CoupledBatch, CouplingStrategy
from .model import TrainConfig, TrainingLog, VectorField, train
from .solvers import FieldFn, SolverConfig, integrate_batch

PAIRS_MAGIC = b"LOOMRF01"
_HEADER = struct.Struct("<8sQQ")


@dataclass
class ReflowPairs:
    noise: np.ndarray
    generated: np.ndarray
    source_tag: str = ""
    solver: str = ""

    def __post_init__(self) -> None:
        if self.noise.shape != self.generated.shape:
            raise ValueError("noise and generated matrices must match in shape")
        if not np.isfinite(self.generated).all():
            raise ValueError("generated samples contain non-finite rows")

    @property
    def n(self) -> int:
        return self.noise.shape[0]

    def mean_pair_cost(self) -> float:
        d = self.generated - self.noise
        return float((d * d).sum(axis=1).mean())

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(PAIRS_MAGIC, *self.noise.shape))
            fh.write(self.noise.astype("<f8").tobytes())
            fh.write(self.generated.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "ReflowPairs":
        raw = Path(path).read_bytes()
        magic, n, d = _HEADER.unpack_from(raw)
        if magic != PAIRS_MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if len(raw) != _HEADER.size + 2 * n * d * 8:
            raise ValueError("pair file size mismatch")
        noise = np.frombuffer(raw, "<f8", n * d, _HEADER.size).reshape(n, d)
        generated = np.frombuffer(raw, "<f8", n * d, _HEADER.size + n * d * 8)
        return cls(noise.copy(), generated.reshape(n, d).copy())


def harvest_pairs(
    field: FieldFn,
    n_pairs: int,
    solver_cfg: SolverConfig,
    rng: np.random.Generator,
    dim: int = 2,
    source_tag: str = "",
) -> ReflowPairs:
    """Integrate fresh noise to t = 1 and keep the (noise, sample) pairs.

    Rows that integrate to a non-finite state are dropped (and counted via
    the returned size); the default solver config should be tight enough
    that pair quality is not integration-limited.
    """
    z = rng.standard_normal((n_pairs, dim))
    finals, _ = integrate_batch(field, z, solver_cfg)
    ok = np.isfinite(finals).all(axis=1)
    return ReflowPairs(z[ok], finals[ok], source_tag, solver_cfg.tag())


class FixedPairCoupling(CouplingStrategy):
    """Minibatches of a frozen (noise, generated) pairing; no matching."""

    kind = "reflow_pairs"

    def __init__(self, pairs: ReflowPairs, m: int):
        self.pairs = pairs
        self.m = m

    def sample(self, rng: np.random.Generator) -> CoupledBatch:
        idx = rng.integers(0, self.pairs.n, size=self.m)
        x = self.pairs.generated[idx]
        z = self.pairs.noise[idx]
        diff = x - z
        cost = float(np.sqrt((diff * diff).sum(axis=1)).sum())
        return CoupledBatch(idx, x, z, None, 0, cost)


def train_reflow(
    pairs: ReflowPairs,
    cfg: TrainConfig,
    m: int = 64,
    hidden: tuple[int, ...] = (128, 128, 128),
    n_freq: int = 16,
    warm_start: VectorField | None = None,
) -> tuple[VectorField, TrainingLog]:
    """Train a field on the fixed pair coupling, from scratch by default."""
    if pairs.n == 0:
        raise ValueError("no pairs to train on")
    dim = pairs.noise.shape[1]
    if warm_start is not None:
        field = VectorField(dim, warm_start.hidden, warm_start.n_freq,
                            warm_start.theta.copy())
    else:
        field = VectorField.initialized(
            dim, hidden, n_freq, np.random.default_rng(cfg.seed)
        )
    log = train(field, FixedPairCoupling(pairs, m), cfg)
    return field, log
