"""Tour-parallel regenerative execution with reproducible per-tour streams.

Tours are i.i.d., so they are farmed out to a worker pool and aggregated by
tour index.  Each tour draws its randomness from a stream keyed by
(seed, tour_index): the results are bit-identical for any worker count.
Costs are measured in potential evaluations, summed over tours for the
serial cost and maximized over tours for the parallel cost.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .explore import SliceConfig
from .model import Schedule, TemperedModel
from .planner import te_infinity
from .st_kernels import TourTrace, run_tour
from .stats import (
    NoTopVisitsError,
    TourStatistics,
    confidence_interval,
    estimate_sigma2,
    estimate_te,
    min_tours,
    ratio_estimate,
)


@dataclass(frozen=True)
class CoordinateFunction:
    """Picklable test function h(x) = x[index]."""

    index: int

    def __call__(self, x):
        return float(x[self.index])


@dataclass
class RunReport:
    variant: str
    alpha: float
    delta: float
    te_hat_input: float
    k: int
    te_hat: float
    serial_cost: int
    parallel_cost: int
    tours: list
    estimates: dict
    seed: int
    k_trial: int | None = None
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = {
            "variant": self.variant,
            "alpha": self.alpha,
            "delta": self.delta,
            "te_hat_input": self.te_hat_input,
            "k": self.k,
            "te_hat": self.te_hat,
            "serial_cost": self.serial_cost,
            "parallel_cost": self.parallel_cost,
            "tours": self.tours,
            "estimates": self.estimates,
            "seed": self.seed,
        }
        if self.k_trial is not None:
            d["k_trial"] = self.k_trial
        return d

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)


def _tour_task(args) -> TourTrace:
    model, schedule, variant, seed, index, h_funcs, max_steps, slice_cfg = args
    rng = np.random.default_rng([seed, index])
    try:
        return run_tour(
            model, schedule, variant, max_steps, rng,
            h_funcs=h_funcs, slice_cfg=slice_cfg,
        )
    except Exception as err:
        err.tour_index = index
        raise


def _run_tours(model, schedule, variant, indices, workers, seed, h_funcs,
               max_steps, slice_cfg):
    args = [
        (model, schedule, variant, seed, i, h_funcs, max_steps, slice_cfg)
        for i in indices
    ]
    if workers <= 1 or len(args) <= 1:
        return [_tour_task(a) for a in args]
    chunk = max(1, len(args) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_tour_task, args, chunksize=chunk))


def _aggregate(model, traces, variant, alpha, delta, te_input, seed, h_funcs,
               h_names, k_trial=None) -> RunReport:
    n_h = len(h_funcs)
    stats = TourStatistics.from_traces(traces, n_h)
    te_hat = estimate_te(stats.visits)
    if h_names is None:
        h_names = [f"h{m}" for m in range(n_h)]
    estimates = {}
    for m, name in enumerate(h_names):
        est = ratio_estimate(stats, m)
        s2 = estimate_sigma2(stats, m)
        lo, hi = confidence_interval(est, s2, stats.k, alpha)
        estimates[name] = {"estimate": est, "sigma2": s2, "ci": [lo, hi]}
    per_tour = [
        {
            "tour": i,
            "n_steps": t.n_steps,
            "visits_top": t.visits_top,
            "v_evals": t.v_evals,
            "cpu_seconds": t.cpu_seconds,
        }
        for i, t in enumerate(traces)
    ]
    v_evals = np.array([t.v_evals for t in traces], dtype=np.int64)
    return RunReport(
        variant=variant,
        alpha=alpha,
        delta=delta,
        te_hat_input=te_input,
        k=len(traces),
        te_hat=te_hat,
        serial_cost=int(v_evals.sum()),
        parallel_cost=int(v_evals.max()),
        tours=per_tour,
        estimates=estimates,
        seed=seed,
        k_trial=k_trial,
        traces=traces,
    )


def run_parallel(
    model: TemperedModel,
    schedule: Schedule,
    kernel_variant: str,
    alpha: float,
    delta: float,
    te_hat: float,
    workers: int,
    rng_seed: int,
    *,
    h_funcs=(CoordinateFunction(0),),
    h_names=None,
    max_steps: int = 10**6,
    slice_cfg: SliceConfig | None = None,
) -> RunReport:
    """Run the number of tours implied by (alpha, delta, te_hat) on a pool.

    The report aggregates the regenerative estimators over all tours; traces
    are kept in memory for serialization.  Bit-identical for any worker
    count at a fixed seed.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    k = min_tours(alpha, delta, te_hat)
    traces = _run_tours(
        model, schedule, kernel_variant, range(k), workers, rng_seed,
        tuple(h_funcs), max_steps, slice_cfg,
    )
    return _aggregate(model, traces, kernel_variant, alpha, delta, te_hat,
                      rng_seed, h_funcs, h_names)


def pilot_then_run(
    model: TemperedModel,
    schedule: Schedule,
    kernel_variant: str,
    alpha: float,
    delta: float,
    lambda_hat: float,
    workers: int,
    rng_seed: int,
    *,
    h_funcs=(CoordinateFunction(0),),
    h_names=None,
    max_steps: int = 10**6,
    slice_cfg: SliceConfig | None = None,
) -> RunReport:
    """Two-phase run: pilot sized by the barrier-limit TE, then a top-up.

    Phase one runs K_trial tours with the tour effectiveness seeded at
    1/(1 + 2 lambda_hat); the realized TE of those tours determines the full
    requirement K, and only the difference is executed in phase two.  Tour
    indices are contiguous so the combined run equals a single-phase run
    with the same seed.
    """
    if lambda_hat < 0:
        raise ValueError("lambda_hat must be >= 0")
    te_seed = te_infinity(lambda_hat)
    k_trial = min_tours(alpha, delta, te_seed)
    traces = _run_tours(
        model, schedule, kernel_variant, range(k_trial), workers, rng_seed,
        tuple(h_funcs), max_steps, slice_cfg,
    )
    te_pilot = estimate_te(np.array([t.visits_top for t in traces]))
    if te_pilot == 0.0:
        raise NoTopVisitsError("pilot tours never reached the target level")
    k = min_tours(alpha, delta, te_pilot)
    if k > k_trial:
        traces += _run_tours(
            model, schedule, kernel_variant, range(k_trial, k), workers,
            rng_seed, tuple(h_funcs), max_steps, slice_cfg,
        )
    return _aggregate(model, traces, kernel_variant, alpha, delta, te_seed,
                      rng_seed, h_funcs, h_names, k_trial=k_trial)
