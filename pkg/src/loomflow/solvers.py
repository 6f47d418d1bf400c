"""Numerical integration of the sampling ODE dy/dt = v(y, t) over [0, 1].

Fields are callables ``v(y, t) -> dy`` taking a batch of states (B, d) and
a scalar time. Three solvers are provided: fixed-step Euler and explicit
midpoint on a uniform grid, and the adaptive Dormand-Prince 5(4) pair with
error-per-step control.

NFE accounting is exact: the counter equals the number of field
evaluations. Euler with N steps costs N, midpoint costs 2N, and dopri5
costs 1 + 6 * attempts (the first stage is reused from the previous step's
last stage, and the initial-step heuristic reuses the very first
evaluation).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

FieldFn = Callable[[np.ndarray, float], np.ndarray]

FIXED_STEP_KINDS = ("euler", "midpoint")
KINDS = FIXED_STEP_KINDS + ("dopri5",)

# Dormand-Prince 5(4) tableau. The propagating row equals the last stage
# row (FSAL); _DP_E holds b5 - b4 for the embedded error estimate.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_MIN_STEP = 1e-14


class IntegrationError(RuntimeError):
    """Integration aborted; ``last_time`` is the last valid time reached."""

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (t = {last_time:.6g})")
        self.last_time = last_time


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "dopri5"
    steps: int = 10
    rtol: float = 1e-5
    atol: float = 1e-5
    record_full: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")

    def tag(self) -> str:
        if self.kind in FIXED_STEP_KINDS:
            return f"{self.kind}:{self.steps}"
        return self.kind


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    nfe: int
    solver: str

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        dim = self.states.shape[1]
        header = "t," + ",".join(f"dim{i}" for i in range(dim))
        body = np.concatenate([self.times[:, None], self.states], axis=1)
        np.savetxt(path, body, delimiter=",", header=header, comments="")


def nfe_of(cfg: SolverConfig) -> int:
    """Field evaluations a fixed-step solve will perform."""
    if cfg.kind == "euler":
        return cfg.steps
    if cfg.kind == "midpoint":
        return 2 * cfg.steps
    raise ValueError("NFE of an adaptive solver is not known a priori")


def _check_state(y: np.ndarray, t: float) -> None:
    if not np.isfinite(y).all():
        raise IntegrationError("non-finite state encountered", t)


def _fixed_step(field: FieldFn, y: np.ndarray, cfg: SolverConfig, record: bool):
    n = cfg.steps
    h = 1.0 / n
    nfe = 0
    times = [0.0]
    states = [y.copy()]
    for k in range(n):
        t = k * h
        if cfg.kind == "euler":
            dy = field(y, t)
            nfe += 1
        else:  # midpoint
            k1 = field(y, t)
            dy = field(y + 0.5 * h * k1, t + 0.5 * h)
            nfe += 2
        y = y + h * dy
        _check_state(y, t + h)
        if record or k == n - 1:
            times.append((k + 1) * h)
            states.append(y.copy())
    times[-1] = 1.0
    return times, states, nfe


def _initial_step(y: np.ndarray, f0: np.ndarray, cfg: SolverConfig) -> float:
    sc = cfg.atol + cfg.rtol * np.abs(y)
    d0 = float(np.sqrt(np.mean((y / sc) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / sc) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        return 1e-6
    return min(0.01 * d0 / d1, 1.0)


def _dopri5(field: FieldFn, y: np.ndarray, cfg: SolverConfig, record: bool):
    t = 0.0
    k1 = field(y, t)
    nfe = 1
    h = _initial_step(y, k1, cfg)
    times = [0.0]
    states = [y.copy()]
    ks = [None] * 7
    while t < 1.0 - 1e-15:
        h = min(h, 1.0 - t)
        if h < _MIN_STEP:
            raise IntegrationError("step size underflow", t)
        ks[0] = k1
        for s in range(1, 7):
            ys = y + h * sum(
                a * ks[idx] for idx, a in enumerate(_DP_A[s]) if a != 0.0
            )
            ks[s] = field(ys, t + _DP_C[s] * h)
        nfe += 6
        y_new = y + h * sum(b * k for b, k in zip(_DP_B, ks) if b != 0.0)
        err = h * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
        if not (np.isfinite(y_new).all() and np.isfinite(err).all()):
            err_norm = np.inf
        else:
            sc = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err / sc) ** 2)))
        if err_norm <= 1.0:
            t = min(t + h, 1.0)
            y = y_new
            k1 = ks[6]  # FSAL
            if record or t >= 1.0 - 1e-15:
                times.append(t)
                states.append(y.copy())
        factor = 5.0 if err_norm == 0.0 else 0.9 * err_norm**-0.2
        h *= min(5.0, max(0.2, factor))
    times[-1] = 1.0
    return times, states, nfe


def integrate(field: FieldFn, z: np.ndarray, cfg: SolverConfig) -> Trajectory:
    """Solve from y(0) = z to t = 1; the final state is the model sample."""
    z = np.asarray(z, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("initial state is not finite")
    squeeze = z.ndim == 1
    y = z[None, :] if squeeze else z
    if cfg.kind in FIXED_STEP_KINDS:
        times, states, nfe = _fixed_step(field, y, cfg, cfg.record_full)
    else:
        times, states, nfe = _dopri5(field, y, cfg, cfg.record_full)
    stacked = np.stack([s[0] if squeeze else s for s in states])
    return Trajectory(np.array(times), stacked, nfe, cfg.tag())


def integrate_batch(
    field: FieldFn, z: np.ndarray, cfg: SolverConfig
) -> tuple[np.ndarray, int]:
    """Integrate many initial states at once; returns (finals, nfe).

    All rows share one time grid. For dopri5 the step control uses the
    error norm over the whole batch, so NFE is that of the joint system.
    """
    traj = integrate(field, np.asarray(z, dtype=np.float64), cfg)
    return traj.final, traj.nfe


def curvature(
    field: FieldFn, z: np.ndarray, n_steps: int
) -> tuple[np.ndarray, float, int]:
    """Direction change of the field along one Euler trajectory.

    At consecutive grid times computes 1 - <v_hat(y_t, t), v_hat(y', t+h)>
    with unit-normalized field values. Pairs touching a zero-norm value are
    skipped. Returns (series with NaN at skips, mean over kept, skip count).
    """
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    series, skipped = _curvature_pairs(field, np.asarray(z, float)[None, :], n_steps)
    series = series[:, 0]
    kept = series[~np.isnan(series)]
    mean = float(kept.mean()) if kept.size else float("nan")
    return series, mean, int(skipped)


def mean_curvature(
    field: FieldFn, z: np.ndarray, n_steps: int
) -> tuple[float, int]:
    """Average per-trajectory mean curvature over a batch of starts."""
    series, skipped = _curvature_pairs(field, np.asarray(z, float), n_steps)
    valid = ~np.isnan(series)
    traj_has = valid.any(axis=0)
    sums = np.nansum(np.where(valid, series, 0.0), axis=0)
    per_traj = sums[traj_has] / valid.sum(axis=0)[traj_has]
    return float(per_traj.mean()), int(skipped)


def _curvature_pairs(field: FieldFn, y: np.ndarray, n_steps: int):
    h = 1.0 / n_steps
    values = []
    for k in range(n_steps + 1):
        t = min(k * h, 1.0)
        v = field(y, t)
        values.append(v)
        if k < n_steps:
            y = y + h * v
            _check_state(y, t + h)
    series = np.full((n_steps, y.shape[0]), np.nan)
    skipped = 0
    norms = [np.linalg.norm(v, axis=1) for v in values]
    for k in range(n_steps):
        ok = (norms[k] > 0.0) & (norms[k + 1] > 0.0)
        skipped += int((~ok).sum())
        dots = (values[k] * values[k + 1]).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            series[k, ok] = 1.0 - (dots / (norms[k] * norms[k + 1]))[ok]
    return series, skipped
