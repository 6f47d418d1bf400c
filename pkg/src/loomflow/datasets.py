"""Deterministic synthetic 2-D (and n-D Gaussian) benchmark distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ot import Assignment

KINDS = (
    "std_gaussian",
    "gaussian_ring",
    "two_moons",
    "checkerboard",
    "polygon_counterexample",
)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int
    dim: int = 2
    seed: int = 0
    modes: int = 8            # gaussian_ring
    radius: float = 4.0       # gaussian_ring
    mode_std: float = 0.3     # gaussian_ring
    noise_std: float = 0.05   # two_moons
    cells: int = 4            # checkerboard (cells x cells grid)
    offset_angle: float = 0.0  # polygon_counterexample; 0 -> 20% of spacing

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind != "std_gaussian" and self.dim != 2:
            raise ValueError(f"{self.kind} is a 2-D dataset")
        if self.kind == "checkerboard" and self.cells % 2:
            raise ValueError("checkerboard needs an even cell count")


def generate(spec: DatasetSpec) -> np.ndarray:
    """Sample matrix (n, dim); a pure function of the spec."""
    gen = np.random.default_rng(spec.seed)
    if spec.kind == "std_gaussian":
        return gen.standard_normal((spec.n, spec.dim))
    if spec.kind == "gaussian_ring":
        angles = 2.0 * np.pi * gen.integers(0, spec.modes, spec.n) / spec.modes
        centers = spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return centers + spec.mode_std * gen.standard_normal((spec.n, 2))
    if spec.kind == "two_moons":
        upper = gen.random(spec.n) < 0.5
        theta = np.pi * gen.random(spec.n)
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        pts = np.stack([x, y], axis=1)
        return pts + spec.noise_std * gen.standard_normal((spec.n, 2))
    if spec.kind == "checkerboard":
        # rejection-free: pick a black cell of the cells x cells grid on [-2, 2]^2
        size = 4.0 / spec.cells
        row = gen.integers(0, spec.cells, spec.n)
        col_half = gen.integers(0, (spec.cells + 1) // 2, spec.n)
        col = (2 * col_half + row % 2) % spec.cells
        offs = gen.random((spec.n, 2)) * size
        base = np.stack([col * size - 2.0, row * size - 2.0], axis=1)
        return base + offs
    if spec.kind == "polygon_counterexample":
        data, _, _, _ = polygon_counterexample(spec.n, spec.offset_angle or None)
        return data
    raise AssertionError(spec.kind)


def polygon_counterexample(
    n_points: int, offset_angle: float | None = None
) -> tuple[np.ndarray, np.ndarray, Assignment, Assignment]:
    """Matching instance with a stationary but globally suboptimal pairing.

    Data points sit at every other vertex of a regular 2n-gon (unit radius);
    noise points sit at the remaining vertices, rotated counterclockwise by
    ``offset_angle``. Matching each data point to its clockwise noise
    neighbour is globally optimal; matching counterclockwise is strictly
    worse yet cannot be improved by re-pairing any strict subset -- only the
    full n-cycle fixes it.

    Returns (data, noise, suboptimal, optimal).
    """
    if n_points < 3:
        raise ValueError("need at least 3 data points")
    spacing = np.pi / n_points  # angle between adjacent 2n-gon vertices
    if offset_angle is None:
        offset_angle = 0.2 * spacing
    if not 0.0 < offset_angle < spacing:
        raise ValueError(
            f"offset_angle must lie in (0, {spacing:.6f}), got {offset_angle}"
        )
    j = np.arange(n_points)
    data_angles = 2.0 * spacing * j
    noise_angles = 2.0 * spacing * j + spacing + offset_angle
    data = np.stack([np.cos(data_angles), np.sin(data_angles)], axis=1)
    noise = np.stack([np.cos(noise_angles), np.sin(noise_angles)], axis=1)
    # clockwise neighbour of data j is noise j-1 (gap spacing - offset);
    # counterclockwise neighbour is noise j (gap spacing + offset)
    optimal = Assignment((j - 1) % n_points)
    suboptimal = Assignment(j.copy())
    return data, noise, suboptimal, optimal
