"""Interpolant construction, the flow-matching loss, and analytic oracles.

Training regresses the field v(y, t) onto the displacement x - z along the
noisy straight-line interpolant y = t*x + (1-t)*z + eps, eps ~ N(0, sigma^2).
Time runs from the noise (t = 0) to the data (t = 1), matching the sampling
ODE convention used by :mod:`loomflow.solvers`.

For standard-normal source and target the optimal field has the closed form
v(y, t) = y * s(t) with s(t) = (2t - 1) / (sigma^2 + t^2 + (1 - t)^2); it is
exposed here as an oracle for testing trained models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import CoupledBatch
from .solvers import FieldFn, SolverConfig, integrate_batch


@dataclass(frozen=True)
class CfmConfig:
    sigma: float = 1e-7
    stratified_t: bool = False

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass
class InterpolantSample:
    x: np.ndarray
    z: np.ndarray
    t: float
    eps: np.ndarray
    y: np.ndarray
    target: np.ndarray


def make_interpolant(
    x: np.ndarray,
    z: np.ndarray,
    t: float,
    sigma: float,
    rng: np.random.Generator,
) -> InterpolantSample:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError("x and z must have the same shape")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    eps = sigma * rng.standard_normal(x.shape) if sigma > 0 else np.zeros_like(x)
    y = t * x + (1.0 - t) * z + eps
    return InterpolantSample(x=x, z=z, t=t, eps=eps, y=y, target=x - z)


def sample_training_points(
    x: np.ndarray,
    z: np.ndarray,
    cfg: CfmConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched interpolants: per-element t ~ U[0,1] (optionally stratified)."""
    m = x.shape[0]
    if cfg.stratified_t:
        t = (rng.permutation(m) + rng.random(m)) / m
    else:
        t = rng.random(m)
    eps = cfg.sigma * rng.standard_normal(x.shape) if cfg.sigma > 0 else 0.0
    y = t[:, None] * x + (1.0 - t[:, None]) * z + eps
    return y, t, x - z


def cfm_loss(
    model,
    batch: CoupledBatch,
    cfg: CfmConfig,
    rng: np.random.Generator,
) -> tuple[float, np.ndarray]:
    """Mean squared regression loss over a coupled batch and its gradient.

    loss = mean_i || v(y_i, t_i) - (x_i - z_i) ||^2, with gradients taken
    w.r.t. the model parameters through a recorded forward pass.
    """
    if batch.data.shape[0] == 0:
        raise ValueError("batch is empty")
    y, t, target = sample_training_points(batch.data, batch.noise, cfg, rng)
    v = model.forward(y, t, record=True)
    if not np.isfinite(v).all():
        raise FloatingPointError("model produced non-finite output")
    resid = v - target
    loss = float((resid * resid).sum(axis=1).mean())
    grads = model.backward(2.0 * resid / resid.shape[0])
    return loss, grads


def oracle_scale(t, sigma: float):
    """s(t) = (2t - 1) / (sigma^2 + t^2 + (1 - t)^2)."""
    t = np.asarray(t, dtype=np.float64)
    return (2.0 * t - 1.0) / (sigma * sigma + t * t + (1.0 - t) ** 2)


def gaussian_oracle_field(y: np.ndarray, t, sigma: float) -> np.ndarray:
    """Optimal field for standard-normal source and target: y * s(t)."""
    y = np.asarray(y, dtype=np.float64)
    s = oracle_scale(t, sigma)
    if np.ndim(s) == 1:
        s = s[:, None]
    return y * s


def make_oracle_field(sigma: float) -> FieldFn:
    return lambda y, t: gaussian_oracle_field(y, t, sigma)


def squared_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise squared Euclidean distance."""
    d = np.asarray(a, float) - np.asarray(b, float)
    return (d * d).sum(axis=1)


def induced_coupling_cost(
    field: FieldFn,
    noise_samples: np.ndarray,
    solver_cfg: SolverConfig,
    convex_cost=squared_distance,
) -> float:
    """Mean transport cost of the coupling (z, g(z)) induced by the model."""
    z = np.asarray(noise_samples, dtype=np.float64)
    generated, _ = integrate_batch(field, z, solver_cfg)
    return float(convex_cost(generated, z).mean())
