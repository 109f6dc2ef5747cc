"""Scalar Gaussian and Gaussian-mixture error models.

All distributions are immutable. Densities accept scalars or arrays and
broadcast like numpy ufuncs. Random draws use numpy's PCG64 generator
seeded through :class:`numpy.random.SeedSequence`, which is the documented
generator for every seeded operation in this package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import DegenerateData, InvalidDistribution, TooFewPoints

#: Densities are clamped here before taking logs so likelihood ratios stay finite.
DENSITY_FLOOR = 1e-300
LOG_DENSITY_FLOOR = math.log(DENSITY_FLOOR)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_WEIGHT_TOL = 1e-9


def as_generator(rng_seed) -> np.random.Generator:
    """Return a PCG64 generator for an int seed, SeedSequence or Generator."""
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    if isinstance(rng_seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(rng_seed))
    if rng_seed is None or isinstance(rng_seed, bool):
        raise TypeError("an explicit integer seed is required")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(rng_seed))))


def normal_logpdf(x, mean, variance):
    """Log of the normal density, unfloored."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return -0.5 * (x - mean) ** 2 / variance - 0.5 * np.log(variance) - _LOG_SQRT_2PI


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))
        if not math.isfinite(self.mean):
            raise InvalidDistribution(f"mean must be finite, got {self.mean}")
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise InvalidDistribution(f"variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def log_pdf(self, x):
        return np.maximum(normal_logpdf(x, self.mean, self.variance), LOG_DENSITY_FLOOR)

    def pdf(self, x):
        return np.exp(normal_logpdf(x, self.mean, self.variance))


@dataclass(frozen=True)
class MomentSummary:
    """Overall mean and variance of an error law."""

    mean: float
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))
        if not math.isfinite(self.mean) or not math.isfinite(self.variance):
            raise InvalidDistribution("moments must be finite")
        if self.variance < 0:
            raise InvalidDistribution(f"variance must be non-negative, got {self.variance}")

    def as_gaussian(self) -> Gaussian:
        return Gaussian(self.mean, self.variance)


@dataclass(frozen=True)
class GaussianMixture:
    """Finite mixture ``sum_i w_i N(mu_i, sigma_i^2)`` on the real line.

    Parameters
    ----------
    weights, means, variances : sequence of float
        Per-component parameters, all of the same length K >= 1. Weights
        must be positive and sum to one within 1e-9.
    """

    weights: tuple
    means: tuple
    variances: tuple
    _arrays: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(self.weights))
        m = tuple(float(v) for v in np.atleast_1d(self.means))
        s = tuple(float(v) for v in np.atleast_1d(self.variances))
        if not (len(w) == len(m) == len(s)):
            raise InvalidDistribution("weights, means and variances differ in length")
        if len(w) < 1:
            raise InvalidDistribution("a mixture needs at least one component")
        if any(not (wi > 0) for wi in w):
            raise InvalidDistribution(f"weights must be positive, got {w}")
        if abs(math.fsum(w) - 1.0) > _WEIGHT_TOL:
            raise InvalidDistribution(f"weights sum to {math.fsum(w)!r}, not 1")
        for mi, si in zip(m, s):
            Gaussian(mi, si)  # validates
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", s)
        arrays = (np.array(w), np.array(m), np.array(s))
        for a in arrays:
            a.flags.writeable = False
        object.__setattr__(self, "_arrays", arrays)

    @classmethod
    def single(cls, mean: float, variance: float) -> "GaussianMixture":
        return cls((1.0,), (mean,), (variance,))

    @classmethod
    def from_components(cls, components: Sequence[tuple]) -> "GaussianMixture":
        """Build from ``[(weight, Gaussian), ...]``."""
        weights = [c[0] for c in components]
        return cls(weights, [c[1].mean for c in components], [c[1].variance for c in components])

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def components(self) -> list:
        return [(w, Gaussian(m, s)) for w, m, s in zip(self.weights, self.means, self.variances)]

    @property
    def is_single(self) -> bool:
        return self.n_components == 1

    def pdf(self, x):
        return pdf(self, x)

    def log_pdf(self, x):
        return log_pdf(self, x)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "components": [
                {"weight": w, "mean": m, "variance": s}
                for w, m, s in zip(self.weights, self.means, self.variances)
            ]
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GaussianMixture":
        try:
            comps = obj["components"]
            return cls(
                [c["weight"] for c in comps],
                [c["mean"] for c in comps],
                [c["variance"] for c in comps],
            )
        except (KeyError, TypeError) as exc:
            raise InvalidDistribution(f"malformed mixture object: {exc!r}") from exc

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))


def _component_logpdf(m: GaussianMixture, x: np.ndarray) -> np.ndarray:
    w, mu, var = m._arrays
    x = np.asarray(x, dtype=float)[..., None]
    return np.log(w) + normal_logpdf(x, mu, var)


def pdf(m: GaussianMixture, x):
    """Mixture density ``sum_i w_i N(x | mu_i, sigma_i^2)``."""
    w, mu, var = m._arrays
    xa = np.asarray(x, dtype=float)[..., None]
    out = np.sum(w * np.exp(normal_logpdf(xa, mu, var)), axis=-1)
    return float(out) if np.ndim(x) == 0 else out


def log_pdf(m: GaussianMixture, x):
    """Log-density via log-sum-exp, floored at ``log(DENSITY_FLOOR)``."""
    comp = _component_logpdf(m, x)
    # |x| near the float max squares to inf; those points sit on the floor anyway
    comp = np.maximum(comp, -np.finfo(float).max)
    top = np.max(comp, axis=-1)
    lse = top + np.log(np.sum(np.exp(comp - top[..., None]), axis=-1))
    out = np.maximum(lse, LOG_DENSITY_FLOOR)
    return float(out) if np.ndim(x) == 0 else out


def sample(m: GaussianMixture, rng_seed, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. values: a component by weight, then a normal draw."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = as_generator(rng_seed)
    w, mu, var = m._arrays
    if m.n_components == 1:
        idx = np.zeros(n, dtype=np.intp)
    else:
        idx = rng.choice(m.n_components, size=n, p=w)
    return rng.normal(mu[idx], np.sqrt(var[idx]))


def moments(m: GaussianMixture) -> MomentSummary:
    w, mu, var = m._arrays
    mean = float(np.sum(w * mu))
    second = float(np.sum(w * (var + mu**2)))
    return MomentSummary(mean, max(second - mean**2, 0.0))


def shift(m: GaussianMixture, delta: float) -> GaussianMixture:
    """Location shift: the law of ``X + delta`` for ``X ~ m``."""
    return GaussianMixture(m.weights, [mu + delta for mu in m.means], m.variances)


# EM -----------------------------------------------------------------------


@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-8
    max_iter: int = 500
    var_floor: float = 1e-6

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.var_floor <= 0:
            raise ValueError(f"invalid EM settings: {self}")


@dataclass(frozen=True)
class EmResult:
    mixture: GaussianMixture
    log_likelihood: float
    n_iter: int
    converged: bool
    history: tuple


def _initial_params(x: np.ndarray, k: int, var_floor: float):
    # evenly spaced quantiles (25th/75th for k=2), then one hard assignment
    qs = (np.arange(k) + 0.5) / k
    centers = np.quantile(x, qs)
    labels = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
    weights = np.empty(k)
    means = np.empty(k)
    variances = np.empty(k)
    overall_var = x.var()
    for j in range(k):
        members = x[labels == j]
        if members.size < 2:
            weights[j] = max(members.size, 1) / x.size
            means[j] = centers[j]
            variances[j] = overall_var
        else:
            weights[j] = members.size / x.size
            means[j] = members.mean()
            variances[j] = members.var()
    weights /= weights.sum()
    return weights, means, np.maximum(variances, var_floor)


def _log_joint(x, weights, means, variances):
    return np.log(weights) + normal_logpdf(x[:, None], means, variances)


def em_fit(data, k: int = 2, config: EmConfig | None = None) -> EmResult:
    """Fit a K-component mixture by expectation-maximization.

    Returns the fitted mixture together with the total log-likelihood after
    every iteration (``history[0]`` is the initialization). EM never lowers
    the likelihood; the variance floor is a constrained M-step and keeps
    that guarantee.
    """
    config = config or EmConfig()
    x = np.asarray(data, dtype=float).ravel()
    k = int(k)
    if k < 1:
        raise TooFewPoints("k must be at least 1")
    if not np.all(np.isfinite(x)):
        raise DegenerateData("data contains non-finite values")
    if x.size >= 1 and np.all(x == x[0]):
        raise DegenerateData("all data points are identical")
    if x.size < 10 * k:
        raise TooFewPoints(f"need at least {10 * k} points for k={k}, got {x.size}")

    weights, means, variances = _initial_params(x, k, config.var_floor)
    lj = _log_joint(x, weights, means, variances)
    top = lj.max(axis=1, keepdims=True)
    norm = top[:, 0] + np.log(np.exp(lj - top).sum(axis=1))
    ll = float(norm.sum())
    history = [ll]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        resp = np.exp(lj - norm[:, None])
        nk = resp.sum(axis=0)
        # dead components keep their previous parameters
        alive = nk > 1e-12
        weights = np.where(alive, nk, 1e-300)
        weights = weights / weights.sum()
        safe_nk = np.where(alive, nk, 1.0)
        new_means = (resp * x[:, None]).sum(axis=0) / safe_nk
        means = np.where(alive, new_means, means)
        new_var = (resp * (x[:, None] - means) ** 2).sum(axis=0) / safe_nk
        variances = np.maximum(np.where(alive, new_var, variances), config.var_floor)

        lj = _log_joint(x, weights, means, variances)
        top = lj.max(axis=1, keepdims=True)
        norm = top[:, 0] + np.log(np.exp(lj - top).sum(axis=1))
        new_ll = float(norm.sum())
        history.append(new_ll)
        improvement = new_ll - ll
        ll = new_ll
        if abs(improvement) < config.tol * max(abs(ll), 1e-300):
            converged = True
            break

    keep = weights > 1e-300
    w = weights[keep] / weights[keep].sum()
    mixture = GaussianMixture(w, means[keep], variances[keep])
    return EmResult(mixture, ll, it, converged, tuple(history))


def fit_em(data, k: int = 2, config: EmConfig | None = None) -> GaussianMixture:
    """Fit a Gaussian mixture to scalar data; see :func:`em_fit` for details."""
    return em_fit(data, k, config).mixture


# KL divergence --------------------------------------------------------------


class KLEstimate(NamedTuple):
    value: float
    stderr: float
    n: int


def kl_gaussian(p: Gaussian, q: Gaussian) -> float:
    """Closed-form ``KL(p || q)`` between two normals."""
    return 0.5 * (
        p.variance / q.variance
        + (p.mean - q.mean) ** 2 / q.variance
        - 1.0
        + math.log(q.variance / p.variance)
    )


def _as_mixture(d) -> GaussianMixture:
    if isinstance(d, GaussianMixture):
        return d
    if isinstance(d, (Gaussian, MomentSummary)):
        return GaussianMixture.single(d.mean, d.variance)
    raise TypeError(f"expected a distribution, got {type(d).__name__}")


def kl_mc(p, q, n: int, rng_seed) -> KLEstimate:
    """Monte-Carlo ``KL(p || q)`` from ``n`` draws of ``p``, with its standard error."""
    if n < 1000:
        raise ValueError("kl_mc needs n >= 1000")
    p, q = _as_mixture(p), _as_mixture(q)
    x = sample(p, rng_seed, n)
    d = log_pdf(p, x) - log_pdf(q, x)
    return KLEstimate(float(d.mean()), float(d.std(ddof=1) / math.sqrt(n)), n)


def kl_divergence(p, q, n: int = 100_000, rng_seed=0) -> KLEstimate:
    """``KL(p || q)``: closed form for two single Gaussians, Monte-Carlo otherwise."""
    pm, qm = _as_mixture(p), _as_mixture(q)
    if pm.is_single and qm.is_single:
        val = kl_gaussian(Gaussian(pm.means[0], pm.variances[0]), Gaussian(qm.means[0], qm.variances[0]))
        return KLEstimate(val, 0.0, 0)
    return kl_mc(pm, qm, n, rng_seed)
