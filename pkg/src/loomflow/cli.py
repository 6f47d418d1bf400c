"""Command-line entry point: train / eval / converge / oracle / sample.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
Output directory resolution order: --out flag, then the config's ``out``
key, then the LOOMFLOW_OUT environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import ot, svg
from .config import ConfigError, ExperimentConfig, parse_config
from .coupling import run_until_stationary
from .datasets import generate, polygon_counterexample
from .flow import oracle_scale
from .metrics import append_leaderboard, evaluate_model
from .model import TrainingDiverged, VectorField, train
from .reflow import harvest_pairs  # noqa: F401  (re-exported for scripting)
from .solvers import SolverConfig, integrate


def _resolve_out(flag: str | None, cfg: ExperimentConfig | None) -> Path:
    out = flag or (cfg["out"] if cfg else "") or os.environ.get("LOOMFLOW_OUT")
    if not out:
        raise ConfigError(
            "no output directory: pass --out, set the config 'out' key, "
            "or export LOOMFLOW_OUT"
        )
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _train_job(values: dict, seed: int, outdir: str) -> None:
    cfg = ExperimentConfig(values)
    spec = cfg.dataset_spec()
    data = generate(spec)
    store = cfg.make_store(spec.n, spec.dim, seed) if cfg.needs_store() else None
    strategy = cfg.make_strategy(data, store)
    field = VectorField.initialized(
        spec.dim,
        cfg["model.hidden"],
        cfg["model.n_freq"],
        np.random.default_rng([seed, 1]),
    )
    log = train(field, strategy, cfg.train_config(seed))
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    field.save(out / "checkpoint.bin")
    if store is not None:
        store.save(out / "store.bin")
    log.to_csv(out / "train_log.csv")


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    out = _resolve_out(args.out, cfg)
    seeds = [args.seed] if args.seed is not None else list(cfg["seeds"])
    jobs = [(cfg.values, s, str(out / f"seed_{s}")) for s in seeds]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_train_job, *job) for job in jobs]
            for fut in futures:
                fut.result()
    else:
        for job in jobs:
            _train_job(*job)
    return 0


def cmd_eval(args) -> int:
    cfg = parse_config(args.config)
    out = _resolve_out(args.out, cfg)
    field = VectorField.load(args.checkpoint)
    spec = cfg.dataset_spec()
    if field.dim != spec.dim:
        raise ConfigError(
            f"checkpoint dim {field.dim} does not match dataset dim {spec.dim}"
        )
    seed = args.seed if args.seed is not None else cfg["seeds"][0]
    for solver in cfg["eval.solvers"]:
        report = evaluate_model(
            field,
            spec,
            solver,
            cfg["eval.n_samples"],
            np.random.default_rng([seed, 2]),
            cfg["eval.curvature_steps"],
        )
        append_leaderboard(
            out / "leaderboard.csv",
            report,
            cfg["strategy.kind"],
            cfg["strategy.caches"],
            cfg["strategy.m"],
            solver.tag(),
            seed,
        )
    return 0


def cmd_converge(args) -> int:
    cfg = parse_config(args.config)
    out = _resolve_out(args.out, cfg)
    spec = cfg.dataset_spec()
    data = generate(spec)
    seed = args.seed if args.seed is not None else cfg["seeds"][0]
    store = cfg.make_store(spec.n, spec.dim, seed)
    report = run_until_stationary(
        store,
        data,
        cfg["strategy.m"],
        patience=cfg["converge.patience"] or None,
        rng=np.random.default_rng([seed, 3]),
        global_every=cfg["converge.global_every"],
        max_iters=cfg["converge.max_iters"] or None,
    )
    report.to_csv(out / "convergence.csv")
    it = np.arange(report.iterations)
    svg.line_plot(
        out / "convergence.svg",
        [
            ("reassignments", it, report.reassignments.astype(float)),
            ("minibatch OT cost", it, report.local_costs),
        ],
        title=f"assignment convergence (n={spec.n}, m={cfg['strategy.m']})",
        xlabel="iteration",
    )
    print(
        f"stationary={report.stationary} iterations={report.iterations} "
        f"final_cost={report.final_cost:.6g}"
    )
    return 0


def cmd_sample(args) -> int:
    field = VectorField.load(args.checkpoint)
    out = _resolve_out(args.out, None)
    solver = SolverConfig(
        kind=args.solver, steps=args.steps, record_full=True
    )
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    trajectories = []
    for i in range(args.n):
        z = rng.standard_normal(field.dim)
        traj = integrate(field, z, solver)
        traj.to_csv(out / f"trajectory_{i:03d}.csv")
        trajectories.append(traj.states)
    if field.dim == 2:
        svg.trajectory_plot(
            out / "trajectories.svg",
            trajectories,
            title=f"{args.n} sampling trajectories ({solver.tag()})",
        )
    return 0


# -- self-contained verification bundle ---------------------------------------


def _oracle_checks() -> list[tuple[str, bool, str]]:
    checks: list[tuple[str, bool, str]] = []
    rng = np.random.default_rng(20240917)

    agree = 0
    for _ in range(100):
        n = int(rng.integers(2, 8))
        costs = rng.random((n, n)) * 10.0
        _, fast = ot.solve_assignment(costs)
        _, exact = ot.brute_force_assignment(costs)
        agree += fast == exact
    checks.append(
        ("hungarian-vs-brute-force", agree == 100, f"{agree}/100 matrices agree")
    )

    data = rng.standard_normal((6, 2))
    noise = rng.standard_normal((6, 2))
    best, _ = ot.brute_force_assignment(ot.build_cost_matrix(data, noise))
    clean = ot.find_negative_cycles(best, data, noise, max_len=6)
    swapped = best.mapping.copy()
    swapped[[0, 1]] = swapped[[1, 0]]
    dirty = ot.find_negative_cycles(ot.Assignment(swapped), data, noise, 2)
    ok = not clean and any(c.length == 2 for c in dirty)
    checks.append(
        (
            "negative-cycle-audit",
            ok,
            f"optimal: {len(clean)} cycles, perturbed: {len(dirty)}",
        )
    )

    d, z, sub, opt = polygon_counterexample(4)
    c_sub = ot.matching_cost(sub, d, z)
    c_opt = ot.matching_cost(opt, d, z)
    _, c_best = ot.brute_force_assignment(ot.build_cost_matrix(d, z))
    stuck = not ot.find_negative_cycles(sub, d, z, 3)
    escapable = bool(ot.find_negative_cycles(sub, d, z, 4))
    ok = stuck and escapable and c_sub > c_opt and abs(c_best - c_opt) < 1e-12
    checks.append(
        (
            "polygon-counterexample",
            ok,
            f"suboptimal {c_sub:.4f} > optimal {c_opt:.4f}, stationary below m=4",
        )
    )

    ts = np.linspace(0.0, 1.0, 101)
    worst = 0.0
    for sigma in (0.0, 0.1, 1.0):
        s = oracle_scale(ts, sigma)
        worst = max(worst, float(np.abs(s + s[::-1]).max()))
        worst = max(worst, abs(float(oracle_scale(0.5, sigma))))
    checks.append(
        ("analytic-field-antisymmetry", worst <= 1e-12, f"max residual {worst:.2e}")
    )

    lin = lambda y, t: y  # noqa: E731  dy/dt = y, exact solution e^t
    errs = {}
    for kind in ("euler", "midpoint"):
        errs[kind] = [
            abs(
                integrate(lin, np.ones(1), SolverConfig(kind, steps=s)).final[0]
                - np.e
            )
            for s in (10, 20, 40, 80)
        ]
    h = np.log(1.0 / np.array([10, 20, 40, 80]))
    slope_e = np.polyfit(h, np.log(errs["euler"]), 1)[0]
    slope_m = np.polyfit(h, np.log(errs["midpoint"]), 1)[0]
    dp = integrate(lin, np.ones(1), SolverConfig("dopri5"))
    dp_err = abs(dp.final[0] - np.e)
    ok = (
        abs(slope_e - 1.0) <= 0.15
        and abs(slope_m - 2.0) <= 0.2
        and dp_err <= 10 * 1e-5
    )
    checks.append(
        (
            "solver-convergence-orders",
            ok,
            f"euler {slope_e:.3f}, midpoint {slope_m:.3f}, dopri5 err {dp_err:.2e}",
        )
    )
    return checks


def cmd_oracle(_args) -> int:
    checks = _oracle_checks()
    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += not ok
    return 2 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loomflow",
        description="train and evaluate flow-matching models with "
        "persistent optimal-transport couplings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="config file path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed list")
        p.add_argument("--jobs", type=int, default=1, help="parallel seed jobs")

    p = sub.add_parser("train", help="train a model per configured seed")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint over the solver grid")
    p.add_argument("checkpoint")
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("converge", help="run assignment updates to stationarity")
    common(p)
    p.set_defaults(fn=cmd_converge)

    p = sub.add_parser("oracle", help="run the self-contained verification suite")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("sample", help="integrate and plot sampling trajectories")
    p.add_argument("checkpoint")
    p.add_argument("--n", type=int, default=24, help="number of trajectories")
    p.add_argument("--solver", default="midpoint", choices=("euler", "midpoint"))
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
