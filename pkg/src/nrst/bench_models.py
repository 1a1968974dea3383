"""Benchmark targets: Gaussian toy, banana, funnel, hierarchical, mRNA,
threshold Weibull, and the XY lattice model.

Each model follows the reference/potential convention: the reference is a
proper distribution with i.i.d. sampling, and the potential is the negative
log of the (unnormalized) target-to-reference density ratio, so beta = 1
recovers the target.  Parameters with bounded or positive support are mapped
to unconstrained coordinates (logit/log) with the Jacobian folded into the
reference density, so the explorers work on all of R^d.

Real datasets are replaced by deterministic synthetic draws from the stated
likelihoods at fixed parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import TemperedModel

_LOG_2PI = math.log(2.0 * math.pi)


def _norm_lpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var)) - (x - mean) ** 2 / (2.0 * var)


def _cauchy_lpdf(x):
    return -math.log(math.pi) - math.log1p(x * x)


def _invgamma_lpdf(z, a, b):
    return a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(z) - b / z


def _sample_invgamma(a, b, rng):
    return b / rng.gamma(a, 1.0)


def _softplus(u):
    return np.logaddexp(0.0, u)


def _expit(u):
    return 1.0 / (1.0 + np.exp(-u))


def _logit(p):
    return np.log(p) - np.log1p(-p)


class ToyGaussian(TemperedModel):
    """Conjugate Gaussian toy model with a fully analytic tempered path.

    Reference N_d(0, sigma0^2 I); potential is the negative Gaussian
    log likelihood of the observation m * ones under unit noise.
    """

    def __init__(self, dim: int = 3, m: float = 2.0, sigma0: float = 2.0):
        super().__init__(dim)
        self.m = float(m)
        self.sigma0 = float(sigma0)
        self._ref_const = -0.5 * dim * (_LOG_2PI + 2.0 * math.log(sigma0))
        self._lik_const = 0.5 * dim * _LOG_2PI

    def sample_reference(self, rng):
        return rng.normal(0.0, self.sigma0, self.dim)

    def log_reference(self, x):
        return self._ref_const - float(np.dot(x, x)) / (2.0 * self.sigma0**2)

    def _potential(self, x):
        diff = x - self.m
        return 0.5 * float(np.dot(diff, diff)) + self._lik_const


class Banana(TemperedModel):
    """Two-dimensional banana-shaped target.

    Target: x1 ~ N(1, 10), x2 | x1 ~ N(x1^2, 0.1^2).  The reference keeps
    the x1 marginal and replaces the conditional by N(11, 10^2) (the target
    second moment of x2 is 11).
    """

    def __init__(self):
        super().__init__(2)

    def sample_reference(self, rng):
        return np.array([rng.normal(1.0, math.sqrt(10.0)), rng.normal(11.0, 10.0)])

    def log_reference(self, x):
        return float(_norm_lpdf(x[0], 1.0, 10.0) + _norm_lpdf(x[1], 11.0, 100.0))

    def _potential(self, x):
        return float(_norm_lpdf(x[1], 11.0, 100.0) - _norm_lpdf(x[1], x[0] ** 2, 0.01))


class Funnel(TemperedModel):
    """Neal's funnel in 20 dimensions with an isotropic Gaussian reference.

    Target: x1 ~ N(0, 3^2) and x_i | x1 ~ N(0, e^{x1}) for i >= 2.
    """

    def __init__(self, dim: int = 20):
        if dim < 2:
            raise ValueError("funnel needs dim >= 2")
        super().__init__(dim)

    def sample_reference(self, rng):
        return rng.normal(0.0, 3.0, self.dim)

    def log_reference(self, x):
        return float(np.sum(_norm_lpdf(x, 0.0, 9.0)))

    def _potential(self, x):
        tail = x[1:]
        var = math.exp(x[0])
        lp_target = np.sum(_norm_lpdf(tail, 0.0, var))
        lp_ref = np.sum(_norm_lpdf(tail, 0.0, 9.0))
        return float(lp_ref - lp_target)


class Hierarchical(TemperedModel):
    """Gaussian hierarchical model with a Cauchy prior on the grand mean.

    Parameters (mu, log tau^2, log sigma^2, theta_1..theta_J); the prior is
    the reference and the potential is the negative log likelihood of the
    (J, M) observation matrix.
    """

    def __init__(self, y: np.ndarray):
        y = np.asarray(y, dtype=float)
        if y.ndim != 2:
            raise ValueError("y must be a (groups, observations) matrix")
        self.y = y
        self.j_groups, self.m_per_group = y.shape
        self._group_sums = y.sum(axis=1)
        self._group_sq = (y**2).sum(axis=1)
        super().__init__(3 + self.j_groups)

    def sample_reference(self, rng):
        mu = rng.standard_cauchy()
        tau2 = _sample_invgamma(0.1, 0.1, rng)
        sig2 = _sample_invgamma(0.1, 0.1, rng)
        theta = rng.normal(mu, math.sqrt(tau2), self.j_groups)
        return np.concatenate([[mu, math.log(tau2), math.log(sig2)], theta])

    def log_reference(self, x):
        mu, ltau2, lsig2 = x[0], x[1], x[2]
        theta = x[3:]
        tau2 = math.exp(ltau2)
        sig2 = math.exp(lsig2)
        lp = _cauchy_lpdf(mu)
        lp += _invgamma_lpdf(tau2, 0.1, 0.1) + ltau2
        lp += _invgamma_lpdf(sig2, 0.1, 0.1) + lsig2
        lp += float(np.sum(_norm_lpdf(theta, mu, tau2)))
        return lp

    def _potential(self, x):
        sig2 = math.exp(x[2])
        theta = x[3:]
        sq = self._group_sq - 2.0 * theta * self._group_sums + self.m_per_group * theta**2
        n_obs = self.y.size
        return 0.5 * n_obs * (_LOG_2PI + x[2]) + float(np.sum(sq)) / (2.0 * sig2)


_MRNA_BOUNDS = np.array([
    [-2.0, 1.0],   # log10 t0
    [-5.0, 5.0],   # log10 kappa
    [-5.0, 5.0],   # log10 beta
    [-5.0, 5.0],   # log10 delta
    [-2.0, 5.0],   # log10 sigma
])


def _mrna_mean(t, t0, kappa, beta, delta):
    dt = t - t0
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        if abs(delta - beta) < 1e-12:
            return kappa * dt * np.exp(-beta * dt)
        return kappa / (delta - beta) * (np.exp(-beta * dt) - np.exp(-delta * dt))


class MRnaTransfection(TemperedModel):
    """mRNA transfection time series with log10-uniform priors.

    Coordinates are logit transforms of the log10 parameters
    (t0, kappa, beta, delta, sigma) over their prior boxes.
    """

    def __init__(self, t: np.ndarray, y: np.ndarray):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.t.shape != self.y.shape:
            raise ValueError("t and y must have matching shapes")
        super().__init__(5)

    def sample_reference(self, rng):
        lo, hi = _MRNA_BOUNDS[:, 0], _MRNA_BOUNDS[:, 1]
        p = rng.uniform(lo, hi)
        return _logit((p - lo) / (hi - lo))

    def log_reference(self, u):
        return float(np.sum(-_softplus(u) - _softplus(-u)))

    def _params(self, u):
        lo, hi = _MRNA_BOUNDS[:, 0], _MRNA_BOUNDS[:, 1]
        return 10.0 ** (lo + (hi - lo) * _expit(u))

    def _potential(self, u):
        t0, kappa, beta, delta, sigma = self._params(u)
        mu = _mrna_mean(self.t, t0, kappa, beta, delta)
        if not np.all(np.isfinite(mu)):
            return math.inf
        resid = self.y - mu
        n = self.y.size
        return 0.5 * n * (_LOG_2PI + 2.0 * math.log(sigma)) + float(
            np.dot(resid, resid)
        ) / (2.0 * sigma**2)


class ThresholdWeibull(TemperedModel):
    """Three-parameter Weibull likelihood with a location threshold.

    The potential is +inf whenever the threshold exceeds the smallest
    observation (zero likelihood), which makes the potential heavier and
    heavier tailed as beta decreases; only reference-level draws land there.
    Coordinates: (logit a over (0, 200), log b, logit c over (0.1, 10)).
    """

    A_RANGE = (0.0, 200.0)
    C_RANGE = (0.1, 10.0)

    def __init__(self, y: np.ndarray):
        self.y = np.asarray(y, dtype=float)
        self.y_min = float(self.y.min())
        super().__init__(3)

    def sample_reference(self, rng):
        a = rng.uniform(*self.A_RANGE)
        b = _sample_invgamma(0.1, 0.1, rng)
        c = rng.uniform(*self.C_RANGE)
        a_lo, a_hi = self.A_RANGE
        c_lo, c_hi = self.C_RANGE
        return np.array([
            _logit((a - a_lo) / (a_hi - a_lo)),
            math.log(b),
            _logit((c - c_lo) / (c_hi - c_lo)),
        ])

    def _params(self, u):
        a_lo, a_hi = self.A_RANGE
        c_lo, c_hi = self.C_RANGE
        a = a_lo + (a_hi - a_lo) * float(_expit(u[0]))
        b = math.exp(u[1])
        c = c_lo + (c_hi - c_lo) * float(_expit(u[2]))
        return a, b, c

    def log_reference(self, u):
        lp = float(-_softplus(u[0]) - _softplus(-u[0]))
        lp += _invgamma_lpdf(math.exp(u[1]), 0.1, 0.1) + float(u[1])
        lp += float(-_softplus(u[2]) - _softplus(-u[2]))
        return lp

    def _potential(self, u):
        a, b, c = self._params(u)
        if a >= self.y_min:
            return math.inf
        z = (self.y - a) / b
        loglik = self.y.size * (math.log(c) - math.log(b)) + float(
            np.sum((c - 1.0) * np.log(z) - z**c)
        )
        return -loglik


class XYModel(TemperedModel):
    """Planar rotor lattice with nearest-neighbor coupling on a torus.

    Reference is uniform on [-pi, pi)^{n^2}; the potential is the negative
    of J times the summed cosine of angle differences along lattice edges.
    """

    def __init__(self, n: int = 8, coupling: float = 2.0):
        super().__init__(n * n)
        self.n = int(n)
        self.coupling = float(coupling)

    def sample_reference(self, rng):
        return rng.uniform(-math.pi, math.pi, self.dim)

    def log_reference(self, x):
        if np.any(x < -math.pi) or np.any(x >= math.pi):
            return -math.inf
        return -self.dim * math.log(2.0 * math.pi)

    def _potential(self, x):
        grid = np.reshape(x, (self.n, self.n))
        e = np.sum(np.cos(grid - np.roll(grid, 1, axis=0)))
        e += np.sum(np.cos(grid - np.roll(grid, 1, axis=1)))
        return -self.coupling * float(e)


def analytic_gaussian_path(d: int, m: float, sigma0: float, beta: float,
                           quad_nodes: int = 200):
    """Closed-form path moments of the Gaussian toy plus a quadrature log Z.

    Returns (mu(beta), sigma(beta)^2, log Z(beta)) with the log normalizing
    constant computed by per-dimension Gauss-Hermite quadrature of the
    reference expectation of exp(-beta V).
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    var = 1.0 / (beta + 1.0 / sigma0**2)
    mu = beta * m * var
    nodes, weights = np.polynomial.hermite.hermgauss(quad_nodes)
    x = math.sqrt(2.0) * sigma0 * nodes
    v1 = 0.5 * (x - m) ** 2 + 0.5 * _LOG_2PI
    expo = np.log(weights) - beta * v1
    mx = expo.max()
    logz1 = mx + math.log(np.sum(np.exp(expo - mx))) - 0.5 * math.log(math.pi)
    return mu, var, d * logz1


def hierarchical_dataset(rng, j_groups: int = 8, m_per_group: int = 20,
                         ratio_band=(12.0, 20.0), max_tries: int = 200000):
    """Draw observations from the hierarchical model, rejection-constrained.

    Resamples until the variance of the group means exceeds the mean
    within-group variance by a factor inside ``ratio_band`` (exact equality
    to the nominal 16 has probability zero).
    """
    for _ in range(max_tries):
        mu = rng.standard_cauchy()
        tau2 = _sample_invgamma(0.1, 0.1, rng)
        sig2 = _sample_invgamma(0.1, 0.1, rng)
        theta = rng.normal(mu, math.sqrt(tau2), j_groups)
        y = rng.normal(theta[:, None], math.sqrt(sig2), (j_groups, m_per_group))
        between = float(np.var(y.mean(axis=1), ddof=1))
        within = float(np.mean(np.var(y, axis=1, ddof=1)))
        if within > 0 and ratio_band[0] <= between / within <= ratio_band[1]:
            return y
    raise RuntimeError("hierarchical dataset rejection sampling did not terminate")


def weibull_dataset(rng, a: float = 10.0, b: float = 2.0, c: float = 1.5,
                    n: int = 50) -> np.ndarray:
    return a + b * rng.weibull(c, n)


def mrna_dataset(rng, t0: float = 0.2, kappa: float = 1.0, beta: float = 0.8,
                 delta: float = 1.2, sigma: float = 0.1, n_obs: int = 30):
    t = np.linspace(0.0, 10.0, n_obs)
    y = _mrna_mean(t, t0, kappa, beta, delta) + sigma * rng.normal(size=n_obs)
    return t, y


@dataclass(frozen=True)
class ModelSpec:
    """Model selection record: name, parameter map, synthetic-data seed."""

    name: str
    params: dict = field(default_factory=dict)
    data_seed: int = 20240817


def generate_synthetic_data(spec: ModelSpec, rng: np.random.Generator):
    """Synthetic dataset for the data-backed models; deterministic per rng."""
    if spec.name == "hierarchical":
        keys = {k: spec.params[k] for k in ("j_groups", "m_per_group") if k in spec.params}
        return hierarchical_dataset(rng, **keys)
    if spec.name == "threshold_weibull":
        keys = {k: spec.params[k] for k in ("a", "b", "c", "n") if k in spec.params}
        return weibull_dataset(rng, **keys)
    if spec.name == "mrna":
        return mrna_dataset(rng)
    raise ValueError(f"model {spec.name!r} has no synthetic dataset")


_MODEL_BUILDERS = {}


def _builder(name):
    def wrap(fn):
        _MODEL_BUILDERS[name] = fn
        return fn
    return wrap


@_builder("toy_gaussian")
def _build_toy(spec, rng):
    p = spec.params
    return ToyGaussian(int(p.get("dim", 3)), float(p.get("m", 2.0)),
                       float(p.get("sigma0", 2.0)))


@_builder("banana")
def _build_banana(spec, rng):
    return Banana()


@_builder("funnel")
def _build_funnel(spec, rng):
    return Funnel(int(spec.params.get("dim", 20)))


@_builder("hierarchical")
def _build_hier(spec, rng):
    return Hierarchical(generate_synthetic_data(spec, rng))


@_builder("mrna")
def _build_mrna(spec, rng):
    t, y = generate_synthetic_data(spec, rng)
    return MRnaTransfection(t, y)


@_builder("threshold_weibull")
def _build_weibull(spec, rng):
    return ThresholdWeibull(generate_synthetic_data(spec, rng))


@_builder("xy")
def _build_xy(spec, rng):
    p = spec.params
    return XYModel(int(p.get("n", 8)), float(p.get("coupling", 2.0)))


def available_models():
    return sorted(_MODEL_BUILDERS)


def make_model(spec: ModelSpec) -> TemperedModel:
    """Instantiate a benchmark model by name; synthetic data is seeded."""
    if spec.name not in _MODEL_BUILDERS:
        raise ValueError(
            f"unknown model {spec.name!r}; available: {', '.join(available_models())}"
        )
    rng = np.random.default_rng(spec.data_seed)
    return _MODEL_BUILDERS[spec.name](spec, rng)
