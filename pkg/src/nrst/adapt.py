"""Self-tuning pipeline: grid, affinities, barrier, grid size, convergence.

The tuner bootstraps with non-reversible parallel tempering (deterministic
even/odd swap rounds) to build a dataset of potential samples per level,
estimates level affinities (stepping-stone log normalizing constants for the
mean-energy strategy, trapezoid of sample medians for the minimum-rejection
strategy), measures per-interval rejection probabilities, accumulates them
into a monotone barrier function, and inverts the barrier to place the grid
at equal rejection increments.  Rounds double the scan budget until four
heuristic stability indicators are jointly satisfied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .explore import SliceConfig, build_explorers, tune_explore_steps
from .model import (
    DivergedPotentialError,
    Schedule,
    TemperedModel,
    acceptance_probability_array,
)

_INIT_DRAW_TRIES = 1000


@dataclass(frozen=True)
class VDataset:
    """Per-level sequences of potential samples {V_n^(i)}, i = 0..N.

    Entries may be +inf at the reference level (zero-likelihood prior
    draws); NaN and -inf are rejected.
    """

    levels: tuple

    def __post_init__(self):
        levels = tuple(np.asarray(v, dtype=float) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise ValueError("need at least two levels")
        for i, v in enumerate(levels):
            if v.ndim != 1 or v.size < 1:
                raise ValueError(f"level {i} must hold at least one sample")
            if np.any(np.isnan(v)) or np.any(v == -np.inf):
                raise ValueError(f"level {i} contains NaN or -inf potentials")

    @property
    def n_levels(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, i):
        return self.levels[i]


@dataclass(frozen=True)
class ConvergenceThresholds:
    """Stopping thresholds for the four stability indicators."""

    l_r: float = 0.1
    l_c: float = 0.005
    l_lambda: float = 0.01
    l_d: float = 0.05

    def __post_init__(self):
        for name in ("l_r", "l_c", "l_lambda", "l_d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _finite_reference_draw(model, rng):
    """Reference draw with finite potential, for warm-starting level chains."""
    for _ in range(_INIT_DRAW_TRIES):
        x = model.sample_reference(rng)
        if math.isfinite(model.potential(x)):
            return x
    raise DivergedPotentialError(x, model.potential(x))


def run_nrpt(
    model: TemperedModel,
    schedule: Schedule,
    n_scan: int,
    rng: np.random.Generator,
    *,
    slice_cfg: SliceConfig | None = None,
    init_states=None,
    return_states: bool = False,
):
    """Non-reversible parallel tempering over the grid; returns the V dataset.

    One scan = an exploration pass on every chain (a fresh reference draw at
    level 0, slice sweeps elsewhere) followed by one swap round.  Swap rounds
    alternate deterministically between even pairs (0,1),(2,3),... and odd
    pairs (1,2),(3,4),...; the phase resets to even on every call.  The
    potential of every level is recorded once per scan, after the swap round.
    """
    if n_scan < 1:
        raise ValueError("n_scan must be >= 1")
    n = schedule.n_levels
    explorers = build_explorers(model, schedule, slice_cfg)
    if init_states is not None:
        xs = [np.array(x, dtype=float, copy=True) for x in init_states]
    else:
        xs = [model.sample_reference(rng)]
        xs += [_finite_reference_draw(model, rng) for _ in range(n)]
    records = np.empty((n + 1, n_scan))
    betas = schedule.betas
    for scan in range(n_scan):
        xs[0] = model.sample_reference(rng)
        for i in range(1, n + 1):
            xs[i] = explorers[i](xs[i], rng)
        vs = np.array([model.potential(xs[i]) for i in range(n + 1)])
        start = 0 if scan % 2 == 0 else 1
        for i in range(start, n, 2):
            j = i + 1
            if vs[i] == vs[j]:
                accept = True
            else:
                log_ratio = (betas[j] - betas[i]) * (vs[j] - vs[i])
                accept = (not math.isnan(log_ratio)) and math.log(rng.random()) < min(
                    0.0, log_ratio
                )
            if accept:
                xs[i], xs[j] = xs[j], xs[i]
                vs[i], vs[j] = vs[j], vs[i]
        records[:, scan] = vs
    data = VDataset(tuple(records))
    if return_states:
        return data, xs
    return data


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if m == -np.inf:
        return -math.inf
    return float(m + np.log(np.sum(np.exp(a - m))))


def stepping_stone_logz(data: VDataset, betas) -> np.ndarray:
    """Log normalizing constants along the grid, anchored at 0 for beta = 0.

    Averages the forward and backward stepping-stone estimators in log space
    and accumulates the per-interval log ratios in one pass over the data.
    """
    betas = np.asarray(betas, dtype=float)
    n = betas.size - 1
    if data.n_levels != n:
        raise ValueError("dataset and grid sizes disagree")
    logz = np.zeros(n + 1)
    for i in range(1, n + 1):
        db = betas[i] - betas[i - 1]
        lo, hi = data[i - 1], data[i]
        forward = -math.log(lo.size) + _logsumexp(-db * lo)
        backward = math.log(hi.size) - _logsumexp(db * hi)
        logz[i] = logz[i - 1] + 0.5 * (forward + backward)
    return logz


def mean_energy_affinities(log_z) -> np.ndarray:
    """Affinities c_i = -log Z(beta_i), re-anchored so c_0 = 0."""
    log_z = np.asarray(log_z, dtype=float)
    c = -(log_z - log_z[0])
    c[0] = 0.0
    return c


def _lower_median(values: np.ndarray) -> float:
    """Lower sample median of the finite entries (even counts take the lower)."""
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        raise ValueError("no finite potential samples at some level")
    finite = np.sort(finite)
    return float(finite[(finite.size - 1) // 2])


def median_affinities(data: VDataset, betas) -> np.ndarray:
    """Trapezoid of per-level sample medians, anchored at c_0 = 0."""
    betas = np.asarray(betas, dtype=float)
    meds = np.array([_lower_median(data[i]) for i in range(data.n_levels + 1)])
    c = np.zeros(betas.size)
    for i in range(1, betas.size):
        c[i] = c[i - 1] + 0.5 * (meds[i - 1] + meds[i]) * (betas[i] - betas[i - 1])
    return c


def estimate_rejections(data: VDataset, betas, affinities):
    """Monte Carlo directional and symmetrized rejection probabilities.

    r_up[i-1] estimates the rejection of the move beta_{i-1} -> beta_i using
    the level i-1 samples, r_down[i-1] the reverse move from the level i
    samples, and r_sym their average.
    """
    betas = np.asarray(betas, dtype=float)
    c = np.asarray(affinities, dtype=float)
    n = betas.size - 1
    r_up = np.empty(n)
    r_down = np.empty(n)
    for i in range(1, n + 1):
        acc_up = acceptance_probability_array(
            data[i - 1], betas[i - 1], betas[i], c[i - 1], c[i]
        )
        acc_dn = acceptance_probability_array(
            data[i], betas[i], betas[i - 1], c[i], c[i - 1]
        )
        r_up[i - 1] = 1.0 - float(np.mean(acc_up))
        r_down[i - 1] = 1.0 - float(np.mean(acc_dn))
    r_sym = 0.5 * (r_up + r_down)
    return r_up, r_down, r_sym


def _fritsch_carlson_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    d = np.diff(y) / h
    m = np.empty_like(y)
    m[0] = d[0]
    m[-1] = d[-1]
    m[1:-1] = 0.5 * (d[:-1] + d[1:])
    for k in range(d.size):
        if d[k] == 0.0:
            m[k] = 0.0
            m[k + 1] = 0.0
            continue
        a = m[k] / d[k]
        b = m[k + 1] / d[k]
        s = a * a + b * b
        if s > 9.0:
            t = 3.0 / math.sqrt(s)
            m[k] = t * a * d[k]
            m[k + 1] = t * b * d[k]
    return m


@dataclass(frozen=True)
class BarrierEstimate:
    """Monotone interpolant of the cumulative rejection knots.

    knots_lambda holds the partial sums of the symmetrized rejections with a
    leading 0; ``total`` is the estimated total barrier.  ``kind`` selects
    Fritsch-Carlson monotone cubic interpolation (default) or piecewise
    linear.
    """

    knots_beta: np.ndarray
    knots_lambda: np.ndarray
    kind: str = "pchip"
    _slopes: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        kb = np.asarray(self.knots_beta, dtype=float)
        kl = np.asarray(self.knots_lambda, dtype=float)
        object.__setattr__(self, "knots_beta", kb)
        object.__setattr__(self, "knots_lambda", kl)
        if kb.shape != kl.shape or kb.ndim != 1 or kb.size < 2:
            raise ValueError("knots must be matching 1-d arrays with >= 2 points")
        if np.any(np.diff(kb) <= 0):
            raise ValueError("knot abscissae must be strictly increasing")
        if np.any(np.diff(kl) < 0):
            raise ValueError("knot ordinates must be non-decreasing")
        if kl[0] != 0.0:
            raise ValueError("barrier must start at 0")
        if self.kind not in ("pchip", "linear"):
            raise ValueError("kind must be 'pchip' or 'linear'")
        if self.kind == "pchip" and kb.size >= 3:
            object.__setattr__(self, "_slopes", _fritsch_carlson_slopes(kb, kl))
        else:
            object.__setattr__(self, "_slopes", None)

    @property
    def total(self) -> float:
        return float(self.knots_lambda[-1])

    def __call__(self, beta):
        beta = np.asarray(beta, dtype=float)
        scalar = beta.ndim == 0
        b = np.clip(np.atleast_1d(beta), self.knots_beta[0], self.knots_beta[-1])
        if self._slopes is None:
            out = np.interp(b, self.knots_beta, self.knots_lambda)
        else:
            kb, kl, m = self.knots_beta, self.knots_lambda, self._slopes
            idx = np.clip(np.searchsorted(kb, b, side="right") - 1, 0, kb.size - 2)
            h = kb[idx + 1] - kb[idx]
            t = (b - kb[idx]) / h
            t2 = t * t
            t3 = t2 * t
            out = (
                (2 * t3 - 3 * t2 + 1) * kl[idx]
                + (t3 - 2 * t2 + t) * h * m[idx]
                + (-2 * t3 + 3 * t2) * kl[idx + 1]
                + (t3 - t2) * h * m[idx + 1]
            )
        return float(out[0]) if scalar else out


def build_barrier(r_sym, betas, kind: str = "pchip") -> BarrierEstimate:
    """Barrier estimate from symmetrized rejections: knots are partial sums."""
    r = np.asarray(r_sym, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if r.size != betas.size - 1:
        raise ValueError("need one rejection estimate per grid interval")
    knots = np.concatenate([[0.0], np.cumsum(np.maximum(r, 0.0))])
    return BarrierEstimate(betas.copy(), knots, kind=kind)


def optimize_grid(barrier: BarrierEstimate, n_levels: int) -> np.ndarray:
    """Grid placing equal barrier increments: beta_i solves L(beta) = (i/N) L.

    Interior points are found by bisection; a zero barrier degenerates to the
    uniform grid.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if barrier.total <= 0.0:
        return np.linspace(0.0, 1.0, n_levels + 1)
    betas = np.empty(n_levels + 1)
    betas[0] = 0.0
    betas[n_levels] = 1.0
    for i in range(1, n_levels):
        target = (i / n_levels) * barrier.total
        lo, hi = 0.0, 1.0
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if barrier(mid) < target:
                lo = mid
            else:
                hi = mid
        betas[i] = 0.5 * (lo + hi)
    # Plateaus in the interpolant can collide interior points; keep the grid
    # strictly increasing.
    for i in range(1, n_levels):
        if betas[i] <= betas[i - 1]:
            betas[i] = betas[i - 1] + 1e-12
    return betas


def n_star(lambda_total: float) -> float:
    """Cost-optimal (real-valued) grid size for a given total barrier."""
    if not lambda_total > 0:
        raise ValueError("lambda_total must be > 0")
    return lambda_total * (1.0 + math.sqrt(1.0 + 1.0 / (1.0 + 2.0 * lambda_total)))


def optimal_grid_size(lambda_total: float, gamma: float) -> int:
    """Grid size gamma * N-star rounded up, at least 2."""
    if not gamma >= 1:
        raise ValueError("gamma must be >= 1")
    return max(2, math.ceil(gamma * n_star(lambda_total)))


@dataclass(frozen=True)
class RoundState:
    """Quantities compared across rounds by the convergence check."""

    affinities: np.ndarray
    barrier: BarrierEstimate
    rejections: tuple  # (r_up, r_down, r_sym)


def _safe_ratio(num: float, denom: float) -> float:
    # Relative change, falling back to absolute change when the reference
    # value vanishes (e.g. log Z(1) = 0 by construction).
    if abs(denom) > 1e-12:
        return num / abs(denom)
    return num


def equi_rejection_indicators(r_up, r_down, r_sym) -> tuple:
    """(std/mean of r_sym, mean |r_down - r_up| / mean r_sym)."""
    rbar = float(np.mean(r_sym))
    if rbar <= 0.0:
        return 0.0, 0.0
    spread = float(np.std(r_sym)) / rbar
    asym = float(np.mean(np.abs(np.asarray(r_down) - np.asarray(r_up)))) / rbar
    return spread, asym


def check_convergence(
    old: RoundState,
    new: RoundState,
    thresholds: ConvergenceThresholds,
    affinity_mode: str,
) -> tuple:
    """Joint stability check; returns (converged, indicator dict).

    The directional-asymmetry indicator applies only under the mean-energy
    affinity strategy, where up/down rejections should agree.
    """
    if old is None:
        raise ValueError("convergence is undefined on the first round")
    r_up, r_down, r_sym = new.rejections
    ind_r, ind_d = equi_rejection_indicators(r_up, r_down, r_sym)
    ind_c = _safe_ratio(
        abs(float(new.affinities[-1]) - float(old.affinities[-1])),
        float(old.affinities[-1]),
    )
    ind_l = _safe_ratio(abs(new.barrier.total - old.barrier.total), old.barrier.total)
    indicators = {"rejection_spread": ind_r, "affinity_change": ind_c,
                  "barrier_change": ind_l, "directional_asymmetry": ind_d}
    converged = (
        ind_r < thresholds.l_r
        and ind_c < thresholds.l_c
        and ind_l < thresholds.l_lambda
        and (affinity_mode != "mean" or ind_d < thresholds.l_d)
    )
    return converged, indicators


def local_rejection_rates(data: VDataset, betas, affinities) -> np.ndarray:
    """Per-level rejection rate estimate: mean of |V - c'| / 2.

    c' is approximated by finite differences of the affinity sequence.
    Diagnostic only.
    """
    betas = np.asarray(betas, dtype=float)
    c = np.asarray(affinities, dtype=float)
    n = betas.size - 1
    cp = np.empty(n + 1)
    cp[0] = (c[1] - c[0]) / (betas[1] - betas[0])
    cp[n] = (c[n] - c[n - 1]) / (betas[n] - betas[n - 1])
    for i in range(1, n):
        cp[i] = (c[i + 1] - c[i - 1]) / (betas[i + 1] - betas[i - 1])
    return np.array([0.5 * float(np.mean(np.abs(data[i] - cp[i]))) for i in range(n + 1)])


@dataclass
class AdaptResult:
    schedule: Schedule
    barrier: BarrierEstimate
    lambda_hat: float
    converged: bool
    rounds: list
    rejections: tuple
    final_indicators: dict
    affinity_mode: str
    n_scan_final: int
    restarts: int
    log_z: np.ndarray | None = None


def _affinities_for(mode, data, betas):
    if mode == "mean":
        logz = stepping_stone_logz(data, betas)
        return mean_energy_affinities(logz), logz
    if mode == "median":
        return median_affinities(data, betas), None
    raise ValueError("affinity_mode must be 'mean' or 'median'")


def _remap_states(states, old_betas, new_betas):
    idx = [int(np.argmin(np.abs(old_betas - b))) for b in new_betas]
    return [np.array(states[j], dtype=float, copy=True) for j in idx]


def adapt(
    model: TemperedModel,
    n_levels_initial: int,
    max_rounds: int,
    affinity_mode: str = "mean",
    thresholds: ConvergenceThresholds | None = None,
    gamma: float = 2.0,
    kappa_bar: float = 0.95,
    rng: np.random.Generator | None = None,
    *,
    slice_cfg: SliceConfig | None = None,
    nrpt_explore_steps: int = 1,
    chain_len: int = 512,
    max_restarts: int = 1,
    restart_mismatch: float = 0.25,
) -> AdaptResult:
    """Full tuning loop: doubling NRPT budget until the indicators stabilize.

    Starts from the uniform grid, doubles the scan count each round, and on
    convergence (or exhaustion of ``max_rounds``) runs a final NRPT pass on
    the final grid to settle affinities and barrier.  If the tuned barrier
    implies a grid size differing from the current one by more than
    ``restart_mismatch`` (relative), the loop restarts once at the implied
    size.  Exploration step counts are tuned last, on the final grid.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    thresholds = thresholds if thresholds is not None else ConvergenceThresholds()

    n = int(n_levels_initial)
    betas = np.linspace(0.0, 1.0, n + 1)
    states = None
    rounds_log = []
    restarts = 0

    while True:
        converged = False
        prev = None
        n_scan = 1
        for round_idx in range(1, max_rounds + 1):
            n_scan *= 2
            sched = Schedule(betas, np.zeros(n + 1), np.full(n, nrpt_explore_steps))
            data, states = run_nrpt(
                model, sched, n_scan, rng,
                slice_cfg=slice_cfg, init_states=states, return_states=True,
            )
            affinities, _ = _affinities_for(affinity_mode, data, betas)
            r_up, r_down, r_sym = estimate_rejections(data, betas, affinities)
            barrier = build_barrier(r_sym, betas)
            current = RoundState(affinities, barrier, (r_up, r_down, r_sym))
            if barrier.total > 0.0:
                betas = optimize_grid(barrier, n)
            indicators = None
            if prev is not None:
                converged, indicators = check_convergence(
                    prev, current, thresholds, affinity_mode
                )
            rounds_log.append({
                "round": round_idx,
                "n_scan": n_scan,
                "n_levels": n,
                "lambda_hat": barrier.total,
                "affinity_top": float(affinities[-1]),
                "indicators": indicators,
                "converged": converged,
            })
            prev = current
            if converged:
                break

        # Final pass on the final grid.
        sched = Schedule(betas, np.zeros(n + 1), np.full(n, nrpt_explore_steps))
        data, states = run_nrpt(
            model, sched, n_scan, rng,
            slice_cfg=slice_cfg, init_states=states, return_states=True,
        )
        affinities, log_z = _affinities_for(affinity_mode, data, betas)
        r_up, r_down, r_sym = estimate_rejections(data, betas, affinities)
        barrier = build_barrier(r_sym, betas)

        if barrier.total > 0.0 and restarts < max_restarts:
            n_target = optimal_grid_size(barrier.total, gamma)
            if abs(n - n_target) / n > restart_mismatch:
                restarts += 1
                old_betas = betas
                n = n_target
                betas = optimize_grid(barrier, n)
                states = _remap_states(states, old_betas, betas)
                continue
        break

    spread, asym = equi_rejection_indicators(r_up, r_down, r_sym)
    final_indicators = {"rejection_spread": spread, "directional_asymmetry": asym}

    tuning_sched = Schedule(betas, affinities, np.ones(n, dtype=int))
    explore_steps = tune_explore_steps(
        model, tuning_sched, kappa_bar, chain_len, rng,
        cfg=slice_cfg, init_states=states,
    )
    schedule = Schedule(betas, affinities, explore_steps)
    return AdaptResult(
        schedule=schedule,
        barrier=barrier,
        lambda_hat=barrier.total,
        converged=converged,
        rounds=rounds_log,
        rejections=(r_up, r_down, r_sym),
        final_indicators=final_indicators,
        affinity_mode=affinity_mode,
        n_scan_final=n_scan,
        restarts=restarts,
        log_z=log_z,
    )
