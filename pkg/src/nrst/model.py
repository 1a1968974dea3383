"""Tempered path of distributions, level affinities, and the tempering move.

A target pi(x) = pi0(x) exp(-V(x)) / Z is bridged to its reference pi0 by the
family pi_beta(x) propto pi0(x) exp(-beta V(x)) for beta in [0, 1].  The grid
of inverse temperatures, the level affinities c_i and the per-level
exploration budgets live in :class:`Schedule`; the problem itself (reference
sampler, reference log density, potential V) lives in :class:`TemperedModel`.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np


class DivergedPotentialError(RuntimeError):
    """The potential evaluated to NaN (or -inf) at some point.

    Carries the offending point in ``.x``.
    """

    def __init__(self, x, value):
        super().__init__(f"potential diverged (value={value!r}) at x={x!r}")
        self.x = x
        self.value = value

    def __reduce__(self):
        return (DivergedPotentialError, (self.x, self.value))


class EvalCounter:
    """Contention-safe accumulator for potential-evaluation counts."""

    __slots__ = ("_lock", "_n")

    def __init__(self):
        self._lock = threading.Lock()
        self._n = 0

    def add(self, k: int = 1) -> None:
        with self._lock:
            self._n += k

    def reset(self) -> None:
        with self._lock:
            self._n = 0

    @property
    def value(self) -> int:
        return self._n

    def __getstate__(self):
        return self._n

    def __setstate__(self, n):
        self._lock = threading.Lock()
        self._n = n


class TemperedModel:
    """A target defined relative to a tractable reference distribution.

    Subclasses provide the three-function interface

    * ``sample_reference(rng)``: one i.i.d. draw from the reference,
    * ``log_reference(x)``: log density of the reference at ``x``,
    * ``_potential(x)``: the potential V(x), i.e. the negative log of the
      density ratio target/reference (negative log likelihood in the
      Bayesian prior-reference case).

    Every call to :meth:`potential` increments ``v_evals``, the per-run cost
    accumulator.  The model object is shared read-only across concurrent
    tours; the counter is the only mutable element.
    """

    dim: int

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be a positive integer, got {dim}")
        self.dim = int(dim)
        self.v_evals = EvalCounter()

    def sample_reference(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_reference(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _potential(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def potential(self, x: np.ndarray) -> float:
        """V(x).  Counted; may be +inf where the target has zero density."""
        self.v_evals.add()
        return float(self._potential(x))


@dataclass(frozen=True)
class Schedule:
    """Grid of inverse temperatures plus per-level tuning parameters.

    ``betas`` is the strictly increasing grid with betas[0] = 0 and
    betas[N] = 1.  ``affinities`` are the level affinities, normalized so the
    first entry is 0.  ``explore_steps`` holds the number of exploration
    sweeps per tempering step for levels 1..N.
    """

    betas: np.ndarray
    affinities: np.ndarray
    explore_steps: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        affinities = np.asarray(self.affinities, dtype=float)
        explore_steps = np.asarray(self.explore_steps, dtype=int)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "affinities", affinities)
        object.__setattr__(self, "explore_steps", explore_steps)
        if betas.ndim != 1 or betas.size < 2:
            raise ValueError("betas must be a 1-d grid with at least 2 points")
        if betas[0] != 0.0 or betas[-1] != 1.0:
            raise ValueError("betas must start at 0 and end at 1")
        if np.any(np.diff(betas) <= 0):
            raise ValueError("betas must be strictly increasing")
        if affinities.shape != betas.shape:
            raise ValueError("affinities must have the same length as betas")
        if not np.all(np.isfinite(affinities)):
            raise ValueError("affinities must be finite")
        if abs(affinities[0]) > 1e-12:
            raise ValueError("affinities must be anchored at affinities[0] == 0")
        if explore_steps.shape != (betas.size - 1,):
            raise ValueError("explore_steps must have one entry per level 1..N")
        if np.any(explore_steps < 1):
            raise ValueError("explore_steps must be positive integers")

    @property
    def n_levels(self) -> int:
        """N, the index of the target level."""
        return self.betas.size - 1

    @classmethod
    def uniform(cls, n_levels: int, explore_steps: int = 1) -> "Schedule":
        """Uniform grid {i/N} with zero affinities."""
        betas = np.linspace(0.0, 1.0, n_levels + 1)
        return cls(betas, np.zeros(n_levels + 1), np.full(n_levels, explore_steps))

    def to_dict(self) -> dict:
        return {
            "betas": self.betas.tolist(),
            "affinities": self.affinities.tolist(),
            "explore_steps": self.explore_steps.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            np.asarray(d["betas"], dtype=float),
            np.asarray(d["affinities"], dtype=float),
            np.asarray(d["explore_steps"], dtype=int),
        )


def acceptance_probability(
    v: float, beta_from: float, beta_to: float, c_from: float, c_to: float
) -> float:
    """Probability of accepting the tempering move beta_from -> beta_to.

    Equals exp(-max{0, (beta_to - beta_from) v - (c_to - c_from)}), so it can
    be evaluated without any normalizing constants.
    """
    args = (v, beta_from, beta_to, c_from, c_to)
    if not all(math.isfinite(a) for a in args):
        raise ValueError(f"acceptance_probability requires finite inputs, got {args}")
    expo = (beta_to - beta_from) * v - (c_to - c_from)
    return math.exp(-max(0.0, expo))


def acceptance_probability_array(
    v: np.ndarray, beta_from: float, beta_to: float, c_from: float, c_to: float
) -> np.ndarray:
    """Vectorized acceptance probability over a batch of potential values.

    Unlike the scalar version, tolerates v = +inf (zero density under the
    target side of the move): the move towards higher beta is then rejected
    with probability one.
    """
    v = np.asarray(v, dtype=float)
    with np.errstate(invalid="ignore"):
        expo = (beta_to - beta_from) * v - (c_to - c_from)
    return np.exp(-np.maximum(0.0, expo))


def log_tempered_density(model: TemperedModel, x: np.ndarray, beta: float) -> float:
    """Unnormalized log density of pi_beta: log pi0(x) - beta V(x).

    beta = 0 short-circuits to the reference log density without evaluating
    V, so reference-level exploration is free.  V(x) = +inf yields -inf
    (zero density, e.g. outside a likelihood's support); NaN or -inf
    potentials raise :class:`DivergedPotentialError`.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    logref = model.log_reference(x)
    if beta == 0.0:
        return float(logref)
    v = model.potential(x)
    if math.isnan(v) or v == -math.inf:
        raise DivergedPotentialError(x, v)
    if v == math.inf:
        return -math.inf
    return float(logref) - beta * v


def pseudo_prior(log_z, affinities) -> np.ndarray:
    """Marginal level probabilities p_i propto Z(beta_i) exp(c_i).

    Only used in tests and idealized simulations where the log normalizing
    constants are known or estimated.  Guarded against overflow by shifting
    by the max exponent.
    """
    log_z = np.asarray(log_z, dtype=float)
    affinities = np.asarray(affinities, dtype=float)
    if log_z.shape != affinities.shape or log_z.ndim != 1 or log_z.size < 1:
        raise ValueError("log_z and affinities must be 1-d arrays of equal length >= 1")
    expo = log_z + affinities
    expo = expo - expo.max()
    w = np.exp(expo)
    return w / w.sum()
