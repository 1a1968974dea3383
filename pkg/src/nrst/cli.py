"""Command-line pipeline: tune -> run -> plan, plus index-sim and bench.

Every subcommand is deterministic given --seed.  Outputs are plain JSON and
tidy CSV so runs are auditable and diffable; plotting is left to notebooks.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import planner
from .adapt import adapt as run_adapt
from .bench_models import ModelSpec, available_models, make_model
from .model import DivergedPotentialError, Schedule
from .runner import CoordinateFunction, pilot_then_run, run_parallel
from .st_kernels import (
    IdealIndexChain,
    TourOverrunError,
    ideal_te,
    simulate_index_tours,
    write_traces_csv,
)
from .stats import NoTopVisitsError, estimate_te


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class RunConfig:
    """Validated knobs shared by the pipeline subcommands."""

    model: str = "toy_gaussian"
    params: dict = None
    affinity_mode: str = "mean"
    gamma: float = 2.0
    kappa_bar: float = 0.95
    alpha: float = 0.95
    delta: float = 0.5
    seed: int = 1
    workers: int = 1
    out: str = "."

    def __post_init__(self):
        if self.params is None:
            self.params = {}
        if self.affinity_mode not in ("mean", "median"):
            raise ConfigError("affinity_mode", "must be 'mean' or 'median'")
        if not self.gamma >= 1:
            raise ConfigError("gamma", "must be >= 1")
        if not 0.0 < self.kappa_bar < 1.0:
            raise ConfigError("kappa_bar", "must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha", "must lie in (0, 1)")
        if not self.delta > 0:
            raise ConfigError("delta", "must be > 0")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")


def _capped_workers(workers: int) -> int:
    cap = os.environ.get("NRST_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _parse_params(raw):
    if not raw:
        return {}
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError("params", f"invalid JSON: {err}")
    if not isinstance(parsed, dict):
        raise ConfigError("params", "must be a JSON object")
    return parsed


def _cmd_tune(args) -> int:
    cfg = RunConfig(
        model=args.model, params=_parse_params(args.params),
        affinity_mode=args.affinity_mode, gamma=args.gamma,
        kappa_bar=args.kappa_bar, seed=args.seed, out=args.out,
    )
    if args.levels < 1:
        raise ConfigError("levels", "must be >= 1")
    if args.max_rounds < 1:
        raise ConfigError("max_rounds", "must be >= 1")
    model = make_model(ModelSpec(cfg.model, cfg.params))
    rng = np.random.default_rng(cfg.seed)
    result = run_adapt(
        model, args.levels, args.max_rounds, cfg.affinity_mode,
        gamma=cfg.gamma, kappa_bar=cfg.kappa_bar, rng=rng,
        nrpt_explore_steps=args.nrpt_explore_steps, chain_len=args.chain_len,
    )
    os.makedirs(cfg.out, exist_ok=True)
    r_up, r_down, r_sym = result.rejections
    payload = {
        "model": {"name": cfg.model, "params": cfg.params},
        **result.schedule.to_dict(),
        "lambda_hat": result.lambda_hat,
        "converged": result.converged,
        "affinity_mode": result.affinity_mode,
        "rounds": result.rounds,
        "rejections": {
            "up": r_up.tolist(), "down": r_down.tolist(), "sym": r_sym.tolist(),
        },
        "final_indicators": result.final_indicators,
        "n_scan_final": result.n_scan_final,
        "seed": cfg.seed,
    }
    sched_path = os.path.join(cfg.out, "schedule.json")
    with open(sched_path, "w") as f:
        json.dump(payload, f, indent=1)
    with open(os.path.join(cfg.out, "barrier.csv"), "w") as f:
        f.write("beta,lambda\n")
        for b, l in zip(result.barrier.knots_beta, result.barrier.knots_lambda):
            f.write(f"{float(b)!r},{float(l)!r}\n")
    print(f"tuned {cfg.model}: N={result.schedule.n_levels} "
          f"lambda_hat={result.lambda_hat:.4f} converged={result.converged}")
    print(f"schedule written to {sched_path}")
    return 0


def _schedule_from_payload(payload) -> Schedule:
    return Schedule.from_dict(payload)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise ConfigError(name, "is required (flag or config file)")


def _cmd_run(args) -> int:
    _require(args, "schedule")
    payload = _load_json(args.schedule)
    cfg = RunConfig(
        model=payload["model"]["name"], params=payload["model"].get("params", {}),
        alpha=args.alpha, delta=args.delta, seed=args.seed,
        workers=_capped_workers(args.workers), out=args.out,
    )
    if args.variant not in ("nrst", "st"):
        raise ConfigError("variant", "must be 'nrst' or 'st'")
    if args.te_hat is not None and not 0.0 < args.te_hat <= 1.0:
        raise ConfigError("te_hat", "must lie in (0, 1]")
    model = make_model(ModelSpec(cfg.model, cfg.params))
    if any(i < 0 or i >= model.dim for i in args.h_coords):
        raise ConfigError("h_coords", f"indices must lie in [0, {model.dim})")
    schedule = _schedule_from_payload(payload)
    h_funcs = tuple(CoordinateFunction(i) for i in args.h_coords)
    h_names = [f"x{i + 1}" for i in args.h_coords]
    if args.te_hat is not None:
        report = run_parallel(
            model, schedule, args.variant, cfg.alpha, cfg.delta, args.te_hat,
            cfg.workers, cfg.seed, h_funcs=h_funcs, h_names=h_names,
        )
    else:
        report = pilot_then_run(
            model, schedule, args.variant, cfg.alpha, cfg.delta,
            payload.get("lambda_hat", 0.0), cfg.workers, cfg.seed,
            h_funcs=h_funcs, h_names=h_names,
        )
    os.makedirs(cfg.out, exist_ok=True)
    report.write_json(os.path.join(cfg.out, "report.json"))
    with open(os.path.join(cfg.out, "traces.csv"), "w") as f:
        write_traces_csv(report.traces, f)
    print(f"{args.variant} run: k={report.k} te_hat={report.te_hat:.4f} "
          f"serial_cost={report.serial_cost} parallel_cost={report.parallel_cost}")
    for name, est in report.estimates.items():
        lo, hi = est["ci"]
        print(f"  {name}: {est['estimate']:.6f}  ci=({lo:.6f}, {hi:.6f})")
    return 0


def _cmd_plan(args) -> int:
    _require(args, "report", "k_extra")
    report = _load_json(args.report)
    times = [t["cpu_seconds"] for t in report["tours"]]
    pools = [int(p) for p in args.pools.split(",") if p]
    if not pools or any(p < 1 for p in pools):
        raise ConfigError("pools", "must be a comma list of positive integers")
    if args.k_extra < 1:
        raise ConfigError("k_extra", "must be >= 1")
    rng = np.random.default_rng(args.seed)
    try:
        model = planner.fit_cpu_model(np.asarray(times, dtype=float))
    except planner.InsufficientDataError as err:
        raise ConfigError("report", str(err))
    curves = planner.cost_curves(model, args.k_extra, pools, args.replications, rng)
    sample = model.sample(args.k_extra, np.random.default_rng(args.seed + 1))
    hist, edges = np.histogram(sample, bins=40)
    rows = ["panel,pool_size,x,y,y_lo,y_hi"]
    for count, lo, hi in zip(hist, edges[:-1], edges[1:]):
        rows.append(
            f"hist,,{float(0.5 * (lo + hi))!r},{int(count)},{float(lo)!r},{float(hi)!r}"
        )
    for pool in pools:
        sim = planner.simulate_pool(sample, pool)
        for t, c in zip(sim.busy_times, sim.busy_counts):
            rows.append(f"busy,{pool},{float(t)!r},{int(c)},,")
    for c in curves:
        rows.append(
            f"time,{c['pool_size']},,{c['makespan_mean']!r},"
            f"{c['makespan_q10']!r},{c['makespan_q90']!r}"
        )
        rows.append(
            f"cost_hpc,{c['pool_size']},,{c['hpc_cost_mean']!r},"
            f"{c['hpc_cost_q10']!r},{c['hpc_cost_q90']!r}"
        )
        rows.append(
            f"cost_cloud,{c['pool_size']},,{c['cloud_cost_mean']!r},"
            f"{c['cloud_cost_q10']!r},{c['cloud_cost_q90']!r}"
        )
    with open(args.out, "w") as f:
        f.write("\n".join(rows) + "\n")
    print(f"plan for {args.k_extra} tours over pools {pools} written to {args.out}")
    return 0


def _cmd_index_sim(args) -> int:
    _require(args, "n_levels", "rho")
    if not 0.0 <= args.rho < 1.0:
        raise ConfigError("rho", "must lie in [0, 1)")
    if args.n_levels < 1:
        raise ConfigError("n_levels", "must be >= 1")
    chain = IdealIndexChain.symmetric(np.full(args.n_levels, args.rho))
    rng = np.random.default_rng(args.seed)
    variants = ["nrst", "st"] if args.variant == "both" else [args.variant]
    print("variant  N  rho    TE_closed  TE_mc      mean_visits")
    for variant in variants:
        closed = ideal_te(chain, variant)
        steps, visits = simulate_index_tours(chain, variant, args.tours, rng)
        mc = estimate_te(visits)
        print(f"{variant:7s}  {args.n_levels}  {args.rho:<5g}  "
              f"{closed:<9.5f}  {mc:<9.5f}  {visits.mean():.4f}")
    return 0


def _cmd_bench(args) -> int:
    _require(args, "schedule")
    payload = _load_json(args.schedule)
    cfg = RunConfig(
        model=payload["model"]["name"], params=payload["model"].get("params", {}),
        alpha=args.alpha, delta=args.delta, seed=args.seed,
        workers=_capped_workers(args.workers),
    )
    variants = ["nrst", "st"] if args.variant == "both" else [args.variant]
    if args.ideal:
        r_sym = np.asarray(payload["rejections"]["sym"], dtype=float)
        chain = IdealIndexChain.symmetric(np.clip(r_sym, 0.0, 1.0 - 1e-9))
        rng = np.random.default_rng(cfg.seed)
        print("variant  TE_closed  TE_mc")
        for variant in variants:
            closed = ideal_te(chain, variant)
            _, visits = simulate_index_tours(chain, variant, args.tours, rng)
            print(f"{variant:7s}  {closed:<9.5f}  {estimate_te(visits):<9.5f}")
        return 0
    model_spec = ModelSpec(cfg.model, cfg.params)
    schedule = _schedule_from_payload(payload)
    print("variant  k      te_hat    serial_cost  parallel_cost")
    for variant in variants:
        model = make_model(model_spec)
        report = pilot_then_run(
            model, schedule, variant, cfg.alpha, cfg.delta,
            payload.get("lambda_hat", 0.0), cfg.workers, cfg.seed,
        )
        print(f"{variant:7s}  {report.k:<5d}  {report.te_hat:<8.4f}  "
              f"{report.serial_cost:<11d}  {report.parallel_cost}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrst",
        description="Non-reversible simulated tempering: tune, run, plan.",
    )
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="adapt grid, affinities, and exploration budget")
    p.add_argument("--model", default="toy_gaussian", choices=available_models())
    p.add_argument("--params", default="", help="JSON object of model parameters")
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--max-rounds", type=int, default=12)
    p.add_argument("--affinity-mode", default="mean", choices=("mean", "median"))
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--kappa-bar", type=float, default=0.95)
    p.add_argument("--nrpt-explore-steps", type=int, default=1)
    p.add_argument("--chain-len", type=int, default=512)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("run", help="parallel regenerative run from a tuned schedule")
    p.add_argument("--schedule", default=None, help="schedule.json from tune")
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--variant", default="nrst", choices=("nrst", "st"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--te-hat", type=float, default=None,
                   help="skip the pilot and run min_tours(alpha, delta, te_hat) tours")
    p.add_argument("--h-coords", type=int, nargs="*", default=[0],
                   help="coordinate indices reported as test functions")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("plan", help="pool-size planning from a pilot report")
    p.add_argument("--report", default=None, help="report.json from run")
    p.add_argument("--k-extra", type=int, default=None)
    p.add_argument("--pools", default="1,2,4,8,16,32,64")
    p.add_argument("--replications", type=int, default=30)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default="plan.csv")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("index-sim", help="closed-form vs simulated tour effectiveness")
    p.add_argument("--n-levels", "--N", dest="n_levels", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--tours", type=int, default=10**5)
    p.add_argument("--variant", default="both", choices=("both", "nrst", "st"))
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_index_sim)

    p = sub.add_parser("bench", help="quality-consistent NRST vs ST cost comparison")
    p.add_argument("--schedule", default=None)
    p.add_argument("--variant", default="both", choices=("both", "nrst", "st"))
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--ideal", action="store_true",
                   help="simulate the idealized index chain from stored rejections")
    p.add_argument("--tours", type=int, default=10**5)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        defaults = _load_json(args.config)
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and parser.get_default(attr) == getattr(args, attr):
                setattr(args, attr, value)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (TourOverrunError, DivergedPotentialError, NoTopVisitsError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
