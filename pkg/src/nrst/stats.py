"""Regenerative estimators: ratio estimates, variances, CIs, tour effectiveness.

Everything here consumes per-tour summaries.  Because tours are i.i.d., the
ratio estimator admits a simple consistent variance estimator and honest
asymptotic confidence intervals; the tour effectiveness condenses sampler
quality into a single number in [0, 1] that bounds the asymptotic variance
of every bounded test function and sizes the required number of tours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NoTopVisitsError(ValueError):
    """No tour ever reached the target level, so no estimate exists."""


@dataclass(frozen=True)
class TourStatistics:
    """Per-tour records: lengths, top-level visit counts, and h tour sums.

    ``h_top_sums[j, m]`` is the sum of the m-th test function over the states
    of tour j at the top level, which is all the ratio and variance
    estimators need (the centering happens after the ratio is known).
    """

    tau: np.ndarray
    visits: np.ndarray
    h_top_sums: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.int64)
        visits = np.asarray(self.visits, dtype=np.int64)
        h = np.asarray(self.h_top_sums, dtype=float)
        if h.ndim == 1:
            h = h[:, None]
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "visits", visits)
        object.__setattr__(self, "h_top_sums", h)
        if tau.ndim != 1 or tau.size < 1:
            raise ValueError("need at least one tour")
        if visits.shape != tau.shape or h.shape[0] != tau.size:
            raise ValueError("per-tour arrays must have matching lengths")
        if np.any(tau < 1) or np.any(visits < 0):
            raise ValueError("tour lengths must be >= 1 and visit counts >= 0")

    @property
    def k(self) -> int:
        return self.tau.size

    @classmethod
    def from_traces(cls, traces, n_h: int) -> "TourStatistics":
        tau = np.array([t.n_steps for t in traces], dtype=np.int64)
        visits = np.array([t.visits_top for t in traces], dtype=np.int64)
        h = np.array([t.h_top_sums(n_h) for t in traces], dtype=float).reshape(len(traces), n_h)
        return cls(tau, visits, h)


def ratio_estimate(stats: TourStatistics, h_index: int = 0) -> float:
    """Estimate of the target expectation: sum of h tour sums over total visits."""
    total_visits = int(stats.visits.sum())
    if total_visits == 0:
        raise NoTopVisitsError("tours never reached the target level")
    return float(stats.h_top_sums[:, h_index].sum()) / total_visits


def estimate_sigma2(stats: TourStatistics, h_index: int = 0) -> float:
    """Consistent estimator of the asymptotic variance of the ratio estimate."""
    r = ratio_estimate(stats, h_index)
    centered = stats.h_top_sums[:, h_index] - r * stats.visits
    total_visits = float(stats.visits.sum())
    return float(stats.k * np.sum(centered**2) / total_visits**2)


def confidence_interval(estimate: float, sigma2: float, k: int, alpha: float):
    """Asymptotic alpha-confidence interval: estimate +- z_alpha sigma / sqrt(k)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    half = normal_quantile((1.0 + alpha) / 2.0) * math.sqrt(sigma2 / k)
    return estimate - half, estimate + half


def estimate_te(visit_counts) -> float:
    """Estimated tour effectiveness (sum v)^2 / (k sum v^2), in [0, 1].

    Defined as 0 when no tour visited the top level, which makes the
    downstream tour-count planner fail loudly instead of dividing by zero.
    """
    v = np.asarray(visit_counts, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("need at least one tour")
    sq = float(np.sum(v**2))
    if sq == 0.0:
        return 0.0
    return float(np.sum(v)) ** 2 / (v.size * sq)


def min_tours(alpha: float, delta: float, te: float) -> int:
    """Tours needed for an alpha-CI of half-width delta on all |h| <= 1.

    ceil((4 / te) (z_alpha / delta)^2).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if not 0.0 < te <= 1.0:
        raise ValueError("te must lie in (0, 1]")
    z = normal_quantile((1.0 + alpha) / 2.0)
    return int(math.ceil((4.0 / te) * (z / delta) ** 2))


def diagnostics_report(stats: TourStatistics, alpha: float, h_names=None) -> dict:
    """JSON-ready diagnostics: k, estimated TE, and per-h estimate/variance/CI."""
    n_h = stats.h_top_sums.shape[1]
    if h_names is None:
        h_names = [f"h{m}" for m in range(n_h)]
    per_h = {}
    for m, name in enumerate(h_names):
        est = ratio_estimate(stats, m)
        s2 = estimate_sigma2(stats, m)
        lo, hi = confidence_interval(est, s2, stats.k, alpha)
        per_h[name] = {"estimate": est, "sigma2": s2, "ci": [lo, hi]}
    return {"k": stats.k, "te_hat": estimate_te(stats.visits), "per_h": per_h}


# Coefficients of Acklam's rational approximation to the standard normal
# quantile, refined below with one Halley step to full double precision.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF via a rational approximation.

    Accurate to well below 1e-9 after one Halley refinement step.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    p_low, p_high = 0.02425, 1 - 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # Halley refinement using the exact CDF via erfc.
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    u = err / pdf
    return x - u / (1.0 + 0.5 * x * u)
