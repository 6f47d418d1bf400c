"""Quantitative evaluation: exact 2-Wasserstein distance and model reports.

W2 between equal-size empirical distributions is computed exactly by
solving the assignment problem on the squared-distance matrix, so it is
only meant for desk-scale sample counts (the solve is cubic).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .datasets import DatasetSpec, generate
from .flow import squared_distance
from .ot import solve_assignment
from .solvers import (
    FIXED_STEP_KINDS,
    FieldFn,
    IntegrationError,
    SolverConfig,
    integrate_batch,
    mean_curvature,
    nfe_of,
)

LEADERBOARD_COLUMNS = (
    "strategy,caches,m,solver,nfe,w2,mean_curvature,induced_cost,seed"
)


@dataclass
class EvalReport:
    w2: float
    mean_curvature: float
    nfe: int
    induced_cost: float
    sample_count: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "w2": self.w2,
                "mean_curvature": self.mean_curvature,
                "nfe": self.nfe,
                "induced_cost": self.induced_cost,
                "sample_count": self.sample_count,
            }
        )


def wasserstein2(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """Exact W2: sqrt of the minimal mean squared distance over bijections."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"sample sets differ in shape: {a.shape} vs {b.shape}")
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :]
    sq -= 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    _, total = solve_assignment(sq)
    return float(np.sqrt(total / a.shape[0]))


def _integrate_tolerant(
    field: FieldFn, z: np.ndarray, cfg: SolverConfig
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Batched solve; falls back to per-row on failure, dropping bad rows."""
    try:
        finals, nfe = integrate_batch(field, z, cfg)
        ok = np.isfinite(finals).all(axis=1)
        return finals[ok], z[ok], nfe, int((~ok).sum())
    except IntegrationError:
        pass
    finals, kept, failures, nfe = [], [], 0, 0
    for row in z:
        try:
            f, nfe = integrate_batch(field, row[None, :], cfg)
            finals.append(f[0])
            kept.append(row)
        except IntegrationError:
            failures += 1
    return np.array(finals), np.array(kept), nfe, failures


def evaluate_model(
    field: FieldFn,
    target_spec: DatasetSpec,
    solver_cfg: SolverConfig,
    n_eval: int,
    rng: np.random.Generator,
    curvature_steps: int = 16,
) -> EvalReport:
    """Generate from fresh noise and score against fresh target samples.

    Noise is drawn from the generator, never from a noise store, so the
    report reflects generalization to unseen source points. ODE failures
    are dropped; more than 1% of them is an error.
    """
    z = rng.standard_normal((n_eval, target_spec.dim))
    finals, z_kept, nfe, failures = _integrate_tolerant(field, z, solver_cfg)
    if failures > 0.01 * n_eval:
        raise RuntimeError(f"{failures}/{n_eval} trajectories failed to integrate")
    fresh_seed = int(rng.integers(2**63))
    target = generate(replace(target_spec, n=len(finals), seed=fresh_seed))
    curv, _ = mean_curvature(field, z_kept, curvature_steps)
    return EvalReport(
        w2=wasserstein2(finals, target),
        mean_curvature=curv,
        nfe=nfe_of(solver_cfg) if solver_cfg.kind in FIXED_STEP_KINDS else nfe,
        induced_cost=float(squared_distance(finals, z_kept).mean()),
        sample_count=len(finals),
    )


def append_leaderboard(
    path: str | Path,
    report: EvalReport,
    strategy: str,
    caches: int,
    m: int,
    solver: str,
    seed: int,
) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a") as fh:
        if new:
            fh.write(LEADERBOARD_COLUMNS + "\n")
        fh.write(
            f"{strategy},{caches},{m},{solver},{report.nfe},{report.w2!r},"
            f"{report.mean_curvature!r},{report.induced_cost!r},{seed}\n"
        )
