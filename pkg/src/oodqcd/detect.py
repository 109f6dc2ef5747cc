"""Streaming change detectors.

Every detector consumes one error sample at a time and returns a new
immutable state. The CUSUM variants differ only in the likelihood model
that produces ``log L(x)``; the Z-score and Chi-square baselines carry a
sliding window in a separate :class:`WindowState`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import _kernels
from .dist import (
    LOG_DENSITY_FLOOR,
    GaussianMixture,
    MomentSummary,
    log_pdf,
    moments,
    normal_logpdf,
)
from .exceptions import ConfigError, InvalidDistribution, SteppedAfterAlarm, ZeroSpread


def _floored_normal_logpdf(x, m: MomentSummary):
    if m.variance <= 0:
        raise InvalidDistribution("a Gaussian surrogate needs positive variance")
    return np.maximum(normal_logpdf(x, m.mean, m.variance), LOG_DENSITY_FLOOR)


# Likelihood models ----------------------------------------------------------


@dataclass(frozen=True)
class Mix:
    """Both laws known exactly as mixtures."""

    pre: GaussianMixture
    post: GaussianMixture

    def pre_logpdf(self, x):
        return log_pdf(self.pre, x)

    def post_logpdf(self, x):
        return log_pdf(self.post, x)


@dataclass(frozen=True)
class Sinmix:
    """Exact pre-change mixture; post-change replaced by a moment-matched normal."""

    pre: GaussianMixture
    post_moments: MomentSummary

    def __post_init__(self):
        if self.post_moments.variance <= 0:
            raise InvalidDistribution("post-change variance must be positive")

    def pre_logpdf(self, x):
        return log_pdf(self.pre, x)

    def post_logpdf(self, x):
        return _floored_normal_logpdf(x, self.post_moments)


@dataclass(frozen=True)
class Single:
    """Both laws replaced by moment-matched normals."""

    pre_moments: MomentSummary
    post_moments: MomentSummary

    def __post_init__(self):
        if self.pre_moments.variance <= 0 or self.post_moments.variance <= 0:
            raise InvalidDistribution("variances must be positive")

    def pre_logpdf(self, x):
        return _floored_normal_logpdf(x, self.pre_moments)

    def post_logpdf(self, x):
        return _floored_normal_logpdf(x, self.post_moments)


@dataclass(frozen=True)
class RobustShift:
    """Post-change law taken as the pre-change mixture shifted by ``kappa``."""

    pre: GaussianMixture
    kappa: float

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise InvalidDistribution(f"kappa must be positive, got {self.kappa}")

    def pre_logpdf(self, x):
        return log_pdf(self.pre, x)

    def post_logpdf(self, x):
        return log_pdf(self.pre, np.asarray(x, dtype=float) - self.kappa)


LikelihoodModel = Union[Mix, Sinmix, Single, RobustShift]


def log_lr(model: LikelihoodModel, x):
    """``log ghat(x) - log fhat(x)`` under the model's (possibly approximate) laws."""
    out = np.asarray(model.post_logpdf(x)) - np.asarray(model.pre_logpdf(x))
    return float(out) if np.ndim(x) == 0 else out


def chisq_terms(model: LikelihoodModel, x):
    """Per-sample Pearson terms ``(g(x) - f(x))**2 / f(x)`` with floored densities."""
    g = np.exp(model.post_logpdf(x))
    f = np.exp(model.pre_logpdf(x))
    out = (g - f) ** 2 / f
    return float(out) if np.ndim(x) == 0 else out


def threshold_for_far(alpha: float) -> float:
    """Threshold ``|log alpha|`` that caps the CUSUM false-alarm rate at alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return abs(math.log(alpha))


# States ---------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorState:
    threshold: float
    statistic: float = 0.0
    time: int = 0
    alarmed: bool = False
    stopping_time: Optional[int] = None

    def __post_init__(self):
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be non-negative, got {self.threshold}")


@dataclass(frozen=True)
class WindowState:
    w: int
    window: tuple = ()

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("window size must be positive")

    @property
    def full(self) -> bool:
        return len(self.window) == self.w

    def push(self, x: float) -> "WindowState":
        return WindowState(self.w, (self.window + (float(x),))[-self.w :])


def _advance(state: DetectorState, statistic: float, alarm: bool) -> DetectorState:
    t = state.time + 1
    if alarm:
        return replace(state, statistic=statistic, time=t, alarmed=True, stopping_time=t)
    return replace(state, statistic=statistic, time=t)


def cusum_step(state: DetectorState, model: LikelihoodModel, x: float) -> DetectorState:
    """One CUSUM update ``W <- max(W + log L(x), 0)``; alarm once ``W >= b``."""
    if state.alarmed:
        raise SteppedAfterAlarm(f"detector alarmed at t={state.stopping_time}; reset first")
    w = _kernels.cusum_update(state.statistic, log_lr(model, float(x)))
    return _advance(state, w, w >= state.threshold)


def zscore_step(wstate: WindowState, state: DetectorState, x: float):
    """Push ``x`` and test ``|z| > b`` once the window is full."""
    if state.alarmed:
        raise SteppedAfterAlarm(f"detector alarmed at t={state.stopping_time}; reset first")
    wstate = wstate.push(x)
    if not wstate.full:
        return wstate, _advance(state, 0.0, False)
    z = _kernels.window_zscore(np.array(wstate.window))
    if math.isnan(z):
        raise ZeroSpread(f"window at t={state.time + 1} has zero spread")
    return wstate, _advance(state, z, abs(z) > state.threshold)


def chisq_step(wstate: WindowState, state: DetectorState, model: LikelihoodModel, x: float):
    """Push ``x`` and test the windowed Pearson sum against ``b``."""
    if state.alarmed:
        raise SteppedAfterAlarm(f"detector alarmed at t={state.stopping_time}; reset first")
    wstate = wstate.push(x)
    if not wstate.full:
        return wstate, _advance(state, 0.0, False)
    stat = _kernels.window_sum(np.asarray(chisq_terms(model, np.array(wstate.window))))
    return wstate, _advance(state, stat, stat > state.threshold)


def reset(state):
    """Fresh state: statistic and clock zeroed, window emptied, threshold kept."""
    if isinstance(state, DetectorState):
        return DetectorState(state.threshold)
    if isinstance(state, WindowState):
        return WindowState(state.w)
    if isinstance(state, tuple):
        return tuple(reset(s) for s in state)
    raise TypeError(f"cannot reset {type(state).__name__}")


# Configuration --------------------------------------------------------------

CUSUM_KINDS = ("cusum_mix", "cusum_sinmix", "cusum_single", "cusum_robust")
WINDOW_KINDS = ("zscore", "chisq")
KINDS = CUSUM_KINDS + WINDOW_KINDS


def _parse_law(obj, what: str):
    if isinstance(obj, (GaussianMixture, MomentSummary)):
        return obj
    if not isinstance(obj, dict):
        raise ConfigError(f"{what}: expected an object, got {obj!r}")
    try:
        if "components" in obj:
            return GaussianMixture.from_dict(obj)
        return MomentSummary(obj["mean"], obj["variance"])
    except (KeyError, TypeError, InvalidDistribution) as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _law_to_dict(law):
    if isinstance(law, GaussianMixture):
        return law.to_dict()
    return {"mean": law.mean, "variance": law.variance}


def _as_moments(law) -> MomentSummary:
    return moments(law) if isinstance(law, GaussianMixture) else law


def _require_mixture(law, what):
    if not isinstance(law, GaussianMixture):
        raise ConfigError(f"{what} must be a mixture object with 'components'")
    return law


@dataclass(frozen=True)
class DetectorConfig:
    """One detector as described by the JSON configuration object."""

    kind: str
    threshold: float
    pre: object = None
    post: object = None
    window: Optional[int] = None
    kappa: Optional[float] = None
    name: Optional[str] = None
    model: object = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown detector kind {self.kind!r}; expected one of {KINDS}")
        try:
            b = float(self.threshold)
        except (TypeError, ValueError):
            raise ConfigError(f"threshold must be a number, got {self.threshold!r}") from None
        if not (b >= 0 and math.isfinite(b)):
            raise ConfigError(f"threshold must be finite and non-negative, got {b}")
        object.__setattr__(self, "threshold", b)
        if self.kind in WINDOW_KINDS:
            if self.window is None or int(self.window) != self.window or self.window < 1:
                raise ConfigError(f"{self.kind} needs a positive integer 'window'")
            object.__setattr__(self, "window", int(self.window))
            if self.kind == "zscore" and self.window < 2:
                raise ConfigError("zscore needs window >= 2")
        object.__setattr__(self, "model", self._build_model())

    def _build_model(self):
        kind = self.kind
        if kind == "zscore":
            return None
        pre = _parse_law(self.pre, "pre") if self.pre is not None else None
        post = _parse_law(self.post, "post") if self.post is not None else None
        if pre is None:
            raise ConfigError(f"{kind} needs 'pre'")
        try:
            if kind == "cusum_robust":
                if self.kappa is None:
                    raise ConfigError("cusum_robust needs 'kappa'")
                return RobustShift(_require_mixture(pre, "pre"), float(self.kappa))
            if post is None:
                raise ConfigError(f"{kind} needs 'post'")
            if kind in ("cusum_mix", "chisq"):
                return Mix(_require_mixture(pre, "pre"), _require_mixture(post, "post"))
            if kind == "cusum_sinmix":
                return Sinmix(_require_mixture(pre, "pre"), _as_moments(post))
            return Single(_as_moments(pre), _as_moments(post))
        except InvalidDistribution as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def label(self) -> str:
        return self.name or self.kind

    @property
    def is_cusum(self) -> bool:
        return self.kind in CUSUM_KINDS

    def with_threshold(self, b: float) -> "DetectorConfig":
        return replace(self, threshold=b)

    def initial_state(self):
        state = DetectorState(self.threshold)
        if self.is_cusum:
            return state
        return WindowState(self.window), state

    def step(self, state, x: float):
        if self.is_cusum:
            return cusum_step(state, self.model, x)
        wstate, dstate = state
        if self.kind == "zscore":
            return zscore_step(wstate, dstate, x)
        return chisq_step(wstate, dstate, self.model, x)

    @classmethod
    def from_dict(cls, obj: dict) -> "DetectorConfig":
        if not isinstance(obj, dict):
            raise ConfigError(f"detector entry must be an object, got {obj!r}")
        known = {"kind", "threshold", "pre", "post", "window", "kappa", "name", "grid"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown detector fields: {sorted(extra)}")
        if "kind" not in obj or "threshold" not in obj:
            raise ConfigError("detector entry needs 'kind' and 'threshold'")
        return cls(
            kind=obj["kind"],
            threshold=obj["threshold"],
            pre=obj.get("pre"),
            post=obj.get("post"),
            window=obj.get("window"),
            kappa=obj.get("kappa"),
            name=obj.get("name"),
        )

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "threshold": self.threshold}
        if self.name is not None:
            out["name"] = self.name
        if self.window is not None:
            out["window"] = self.window
        if self.kappa is not None:
            out["kappa"] = float(self.kappa)
        if self.pre is not None:
            out["pre"] = _law_to_dict(_parse_law(self.pre, "pre"))
        if self.post is not None:
            out["post"] = _law_to_dict(_parse_law(self.post, "post"))
        return out


@dataclass
class Trace:
    samples: np.ndarray
    statistics: np.ndarray
    alarmed: np.ndarray
    stopping_time: Optional[int]

    def __len__(self):
        return len(self.samples)


def run(config: DetectorConfig, stream) -> Trace:
    """Feed ``stream`` through the detector until the first alarm.

    Steps after the alarm are recorded with the frozen statistic so the
    trace covers the whole stream.
    """
    xs = np.asarray(stream, dtype=float).ravel()
    state = config.initial_state()
    stats = np.zeros(xs.size)
    flags = np.zeros(xs.size, dtype=bool)
    tau = None
    for i, x in enumerate(xs):
        if tau is None:
            state = config.step(state, x)
            d = state if config.is_cusum else state[1]
            stats[i] = d.statistic
            if d.alarmed:
                tau = d.stopping_time
        else:
            stats[i] = stats[i - 1]
        flags[i] = tau is not None
    return Trace(xs, stats, flags, tau)
