"""Experiment configuration: a flat key-value text file with dotted keys.

Lines look like ``dataset.kind = gaussian_ring``; ``#`` starts a comment.
Every key is validated against the schema below and unknown keys are
rejected up front, so a bad config fails before any work starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .coupling import (
    CouplingStrategy,
    IndependentCoupling,
    LoomCoupling,
    MinibatchOTCoupling,
    PhiMixCoupling,
)
from .datasets import KINDS as DATASET_KINDS, DatasetSpec
from .flow import CfmConfig
from .model import TrainConfig
from .solvers import SolverConfig
from .store import NoiseStore

STRATEGY_KINDS = ("independent", "minibatch_ot", "loom", "phi_mix")


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.split(",") if tok.strip())


def _parse_solver(tok: str) -> SolverConfig:
    if ":" in tok:
        kind, steps = tok.split(":", 1)
        return SolverConfig(kind=kind.strip(), steps=int(steps))
    return SolverConfig(kind=tok.strip())


def _parse_solvers(raw: str) -> tuple[SolverConfig, ...]:
    return tuple(_parse_solver(tok) for tok in raw.split(",") if tok.strip())


_SCHEMA: dict[str, tuple] = {
    "dataset.kind": (str, "gaussian_ring"),
    "dataset.n": (int, 4096),
    "dataset.dim": (int, 2),
    "dataset.seed": (int, 0),
    "dataset.modes": (int, 8),
    "dataset.radius": (float, 4.0),
    "dataset.mode_std": (float, 0.3),
    "dataset.noise_std": (float, 0.05),
    "dataset.cells": (int, 4),
    "dataset.offset_angle": (float, 0.0),
    "strategy.kind": (str, "loom"),
    "strategy.m": (int, 64),
    "strategy.caches": (int, 1),
    "strategy.phi": (float, 0.5),
    "model.hidden": (_parse_ints, (128, 128, 128)),
    "model.n_freq": (int, 16),
    "model.lr": (float, 1e-3),
    "model.iterations": (int, 2000),
    "model.warmup": (int, 100),
    "model.ema": (float, 0.0),
    "cfm.sigma": (float, 1e-7),
    "cfm.stratified_t": (_parse_bool, False),
    "eval.solvers": (
        _parse_solvers,
        (
            SolverConfig("midpoint", 2),
            SolverConfig("midpoint", 4),
            SolverConfig("midpoint", 6),
            SolverConfig("dopri5"),
        ),
    ),
    "eval.n_samples": (int, 1024),
    "eval.curvature_steps": (int, 16),
    "converge.patience": (int, 0),
    "converge.global_every": (int, 100),
    "converge.max_iters": (int, 0),
    "sample.n": (int, 24),
    "seeds": (_parse_ints, (0,)),
    "out": (str, ""),
}


@dataclass
class ExperimentConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def dataset_spec(self) -> DatasetSpec:
        v = self.values
        if v["dataset.kind"] not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {v['dataset.kind']!r}")
        return DatasetSpec(
            kind=v["dataset.kind"],
            n=v["dataset.n"],
            dim=v["dataset.dim"],
            seed=v["dataset.seed"],
            modes=v["dataset.modes"],
            radius=v["dataset.radius"],
            mode_std=v["dataset.mode_std"],
            noise_std=v["dataset.noise_std"],
            cells=v["dataset.cells"],
            offset_angle=v["dataset.offset_angle"],
        )

    def needs_store(self) -> bool:
        return self.values["strategy.kind"] in ("loom", "phi_mix")

    def make_store(self, n: int, dim: int, seed: int) -> NoiseStore:
        return NoiseStore.create(n, self.values["strategy.caches"], dim, seed)

    def make_strategy(
        self, data: np.ndarray, store: NoiseStore | None
    ) -> CouplingStrategy:
        kind = self.values["strategy.kind"]
        m = self.values["strategy.m"]
        if kind == "independent":
            return IndependentCoupling(data, m)
        if kind == "minibatch_ot":
            return MinibatchOTCoupling(data, m)
        if store is None:
            raise ConfigError(f"strategy {kind!r} requires a noise store")
        if kind == "loom":
            return LoomCoupling(data, store, m)
        if kind == "phi_mix":
            return PhiMixCoupling(data, store, m, self.values["strategy.phi"])
        raise ConfigError(f"unknown strategy kind {kind!r}")

    def train_config(self, seed: int) -> TrainConfig:
        v = self.values
        return TrainConfig(
            iterations=v["model.iterations"],
            lr=v["model.lr"],
            warmup=v["model.warmup"],
            seed=seed,
            cfm=CfmConfig(v["cfm.sigma"], v["cfm.stratified_t"]),
            ema_decay=v["model.ema"],
        )


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {key: default for key, (_, default) in _SCHEMA.items()}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        conv = _SCHEMA[key][0]
        try:
            values[key] = conv(raw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}")
    cfg = ExperimentConfig(values)
    if cfg.values["strategy.kind"] not in STRATEGY_KINDS:
        raise ConfigError(f"unknown strategy kind {cfg.values['strategy.kind']!r}")
    cfg.dataset_spec()  # validates dataset fields eagerly
    return cfg
