"""Exploration kernels: slice sampling within Gibbs and step-count tuning.

One exploration kernel per tempering level, each leaving its tempered
distribution invariant.  Slice sampling needs no per-level adaptation, which
is what makes it usable inside a tuning loop whose grid moves every round.
The number of self-compositions per level is chosen from the lag-n
autocorrelation of the potential series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Schedule, TemperedModel, log_tempered_density

# Shrinkage intervals narrower than this indicate a numerically degenerate
# target (e.g. a point mass) rather than a slice that is still being located.
_MIN_SLICE_WIDTH = 1e-300


class SliceNumericalError(RuntimeError):
    """Slice shrinkage collapsed or the initial point had no density."""


@dataclass(frozen=True)
class SliceConfig:
    """Stepping-out slice sampler settings.

    initial_width is the starting bracket size; max_doublings bounds the
    number of stepping-out expansions per side.  Slice sampling adapts the
    bracket on the fly, so these defaults are rarely worth touching.
    """

    initial_width: float = 1.0
    max_doublings: int = 20

    def __post_init__(self):
        if not self.initial_width > 0:
            raise ValueError("initial_width must be > 0")
        if self.max_doublings < 1:
            raise ValueError("max_doublings must be >= 1")


def _slice_coordinate(x, d, logp, log_density, cfg, rng):
    """One slice update of coordinate d in place. Returns the new log density."""
    x0 = float(x[d])
    u = rng.random()
    while u <= 0.0:
        u = rng.random()
    y = logp + math.log(u)

    w = cfg.initial_width
    r = rng.random()
    left = x0 - w * r
    right = left + w
    # Randomized step-out budget keeps the truncated interval reversible.
    j = int(math.floor(cfg.max_doublings * rng.random()))
    k = (cfg.max_doublings - 1) - j
    x[d] = left
    while j > 0 and log_density(x) > y:
        left -= w
        x[d] = left
        j -= 1
    x[d] = right
    while k > 0 and log_density(x) > y:
        right += w
        x[d] = right
        k -= 1

    while True:
        if right - left < _MIN_SLICE_WIDTH:
            raise SliceNumericalError(
                f"slice interval collapsed below {_MIN_SLICE_WIDTH} at coordinate {d}"
            )
        x1 = left + (right - left) * rng.random()
        x[d] = x1
        lp = log_density(x)
        if lp > y:
            return lp
        if x1 < x0:
            left = x1
        else:
            right = x1


def slice_step(x, log_density, cfg: SliceConfig, rng: np.random.Generator) -> np.ndarray:
    """One sweep of coordinate-wise slice sampling (fixed ascending scan).

    Returns a new point whose log density is at least the sampled slice
    level; the sweep leaves ``log_density`` invariant.
    """
    x = np.array(x, dtype=float, copy=True)
    logp = log_density(x)
    if not math.isfinite(logp):
        raise SliceNumericalError(f"log density not finite at the initial point: {logp}")
    for d in range(x.size):
        logp = _slice_coordinate(x, d, logp, log_density, cfg, rng)
    return x


class ExplorationKernel:
    """Slice-within-Gibbs kernel for one tempering level.

    Immutable configuration; callable as kernel(x, rng) -> x'.  Applies
    ``n_steps`` full sweeps per call.
    """

    def __init__(self, model: TemperedModel, beta: float, n_steps: int = 1,
                 cfg: SliceConfig | None = None):
        self.model = model
        self.beta = float(beta)
        self.n_steps = int(n_steps)
        self.cfg = cfg if cfg is not None else SliceConfig()

    def log_density(self, x) -> float:
        return log_tempered_density(self.model, x, self.beta)

    def __call__(self, x, rng):
        for _ in range(self.n_steps):
            x = slice_step(x, self.log_density, self.cfg, rng)
        return x


class ComposedKernel:
    """n-fold self-composition of a kernel: applies the base n times."""

    def __init__(self, base, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.base = base
        self.n = int(n)

    def __call__(self, x, rng):
        for _ in range(self.n):
            x = self.base(x, rng)
        return x


def compose(kernel, n: int):
    """Self-composition kernel^n; V-evaluation cost scales by n."""
    return ComposedKernel(kernel, n)


def build_explorers(model: TemperedModel, schedule: Schedule,
                    cfg: SliceConfig | None = None) -> list:
    """Kernels for levels 1..N (index 0 unused: the reference is drawn i.i.d.)."""
    cfg = cfg if cfg is not None else SliceConfig()
    kernels = [None]
    for i in range(1, schedule.n_levels + 1):
        kernels.append(
            ExplorationKernel(model, schedule.betas[i], int(schedule.explore_steps[i - 1]), cfg)
        )
    return kernels


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation at lags 0..max_lag.

    A zero-variance series returns zeros at every positive lag.
    """
    v = np.asarray(series, dtype=float)
    n = v.size
    c = v - v.mean()
    denom = float(np.dot(c, c))
    out = np.zeros(max_lag + 1)
    out[0] = 1.0
    if denom == 0.0:
        out[0] = 0.0
        return out
    for lag in range(1, min(max_lag, n - 1) + 1):
        out[lag] = float(np.dot(c[:-lag], c[lag:])) / denom
    return out


def steps_from_autocorrelation(kappas, kappa_bar: float, n_max: int = 64) -> int:
    """Smallest lag n >= 1 with kappa(n) <= kappa_bar, capped at n_max.

    Negative estimates are truncated to 0 before thresholding.
    """
    kappas = np.maximum(np.asarray(kappas, dtype=float), 0.0)
    for n in range(1, min(kappas.size - 1, n_max) + 1):
        if kappas[n] <= kappa_bar:
            return n
    return n_max


def tune_explore_steps(
    model: TemperedModel,
    schedule: Schedule,
    kappa_bar: float,
    chain_len: int,
    rng: np.random.Generator,
    *,
    n_max: int = 64,
    cfg: SliceConfig | None = None,
    init_states=None,
) -> np.ndarray:
    """Per-level exploration step counts from the V autocorrelation.

    Runs a single-sweep slice chain of length ``chain_len`` at each level of
    the (final) grid, estimates the lag-n autocorrelation of the V series and
    returns the smallest n that brings it at or below ``kappa_bar``.  Levels
    use independent spawned rng streams, so results do not depend on the
    order in which levels are processed.
    """
    if not 0.0 < kappa_bar < 1.0:
        raise ValueError("kappa_bar must lie in (0, 1)")
    if chain_len < 2:
        raise ValueError("chain_len must be >= 2")
    cfg = cfg if cfg is not None else SliceConfig()
    n = schedule.n_levels
    streams = rng.spawn(n)
    steps = np.ones(n, dtype=int)
    for i in range(1, n + 1):
        level_rng = streams[i - 1]
        kernel = ExplorationKernel(model, schedule.betas[i], 1, cfg)
        if init_states is not None:
            x = np.array(init_states[i], dtype=float, copy=True)
        else:
            x = model.sample_reference(level_rng)
        vs = np.empty(chain_len)
        for t in range(chain_len):
            x = kernel(x, level_rng)
            vs[t] = model.potential(x)
        if np.var(vs) == 0.0:
            steps[i - 1] = 1
            continue
        kappas = autocorrelation(vs, n_max)
        steps[i - 1] = steps_from_autocorrelation(kappas, kappa_bar, n_max)
    return steps
