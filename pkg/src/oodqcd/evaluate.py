"""Monte-Carlo evaluation harness: delays, false alarms, calibration, sweeps.

Seeding rule: trial ``i`` of an experiment stream identified by the integer
key tuple ``key`` draws from ``PCG64(SeedSequence(seed, spawn_key=(*key, i)))``.
Every trial therefore owns an independent generator, and aggregates do not
depend on execution order or on the number of workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .detect import DetectorConfig, LikelihoodModel, Mix, RobustShift, Single, Sinmix, chisq_terms, log_lr
from .dist import GaussianMixture, as_generator, kl_mc, sample, shift
from .exceptions import HorizonTooShort, Unreachable, ZeroSpread
from .simgen import INFINITY, ChangeScenario

MAX_HORIZON = 100_000
FIRST_CHUNK = 32
MAX_CHUNK = 65_536

# stream keys keep MTFA, WADD and report draws disjoint
KEY_MTFA = 1
KEY_WADD = 2
KEY_DELAY = 3
KEY_REPORT = 4
KEY_ROBUST = 5
KEY_CALIBRATE = 6


def trial_seed(seed: int, key: Sequence[int], i: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(*map(int, key), int(i)))


# single trial -------------------------------------------------------------------


def _transform(config: DetectorConfig):
    if config.kind == "zscore":
        return None
    if config.kind == "chisq":
        return lambda x: chisq_terms(config.model, x)
    return lambda x: log_lr(config.model, x)


def run_trial(config: DetectorConfig, scenario: ChangeScenario, horizon: int, rng) -> int:
    """Stopping time of one seeded stream, or 0 when no alarm by ``horizon``.

    Samples are drawn in growing chunks so long censored runs stay cheap; the
    arithmetic per step is the same compiled kernel the streaming API uses.
    """
    rng = as_generator(rng)
    b = config.threshold
    f = _transform(config)
    pos = 0
    chunk = FIRST_CHUNK
    w_stat = 0.0
    w = config.window or 1
    carry = np.empty(0)
    while pos < horizon:
        n = min(chunk, horizon - pos)
        x = scenario.draw(rng, pos, n)
        if config.is_cusum:
            idx, w_stat = _kernels.cusum_first_crossing(np.asarray(f(x), dtype=float), w_stat, b)
            if idx >= 0:
                return pos + idx + 1
        else:
            vals = np.concatenate((carry, x if f is None else np.asarray(f(x), dtype=float)))
            seen = pos - carry.size
            if config.kind == "zscore":
                idx = _kernels.zscore_first_crossing(vals, seen, w, b)
                if idx <= -2:
                    raise ZeroSpread(f"zero-spread window at t={seen + (-2 - idx) + 1}")
            else:
                idx = _kernels.windowed_sum_first_crossing(vals, seen, w, b)
            if idx >= 0:
                return seen + idx + 1
            carry = vals[vals.size - (w - 1):] if w > 1 else np.empty(0)
        pos += n
        chunk = min(chunk * 2, MAX_CHUNK)
    return 0


def _block(config, scenario, horizon, seed, key, start, stop):
    return [run_trial(config, scenario, horizon, trial_seed(seed, key, i)) for i in range(start, stop)]


def run_trials(
    config: DetectorConfig,
    scenario: ChangeScenario,
    trials: int,
    horizon: int,
    seed: int,
    key: Sequence[int] = (0,),
    n_jobs: int = 1,
) -> np.ndarray:
    """Stopping times of ``trials`` independent streams (0 marks censoring)."""
    trials, horizon = int(trials), int(horizon)
    if n_jobs == 1 or trials < 2:
        out = _block(config, scenario, horizon, seed, key, 0, trials)
    else:
        from joblib import Parallel, delayed

        n_jobs = min(int(n_jobs), trials)
        edges = np.linspace(0, trials, n_jobs + 1).astype(int)
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_block)(config, scenario, horizon, seed, key, lo, hi)
            for lo, hi in zip(edges[:-1], edges[1:])
        )
        out = [t for part in parts for t in part]
    return np.asarray(out, dtype=np.int64)


# estimators -----------------------------------------------------------------------


@dataclass(frozen=True)
class DelayEstimate:
    value: float
    stderr: float
    trials: int
    censored: int
    mean_tau: float
    horizon: int


@dataclass(frozen=True)
class MTFAEstimate:
    value: float
    stderr: float
    trials: int
    censored: int
    lower_bound: bool
    alarms: int
    steps: int
    horizon: int

    @property
    def far(self) -> float:
        """False alarms per monitored step (ratio estimator of ``1/E[tau]``)."""
        return self.alarms / self.steps


def _mean_se(x: np.ndarray):
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def post_drift(config: DetectorConfig, post: GaussianMixture, n: int = 10_000, seed: int = 0) -> float:
    """Mean log-likelihood increment under ``post``; nan for windowed detectors."""
    if not config.is_cusum:
        return math.nan
    x = sample(post, as_generator(seed), n)
    return float(np.mean(log_lr(config.model, x)))


def default_wadd_horizon(config: DetectorConfig, scenario: ChangeScenario) -> int:
    """Ten times ``b / drift`` capped at 1e5; the cap alone when drift is not positive."""
    drift = post_drift(config, scenario.post)
    if not drift > 0:
        return MAX_HORIZON
    return int(min(MAX_HORIZON, max(100, math.ceil(10 * config.threshold / drift))))


def estimate_wadd(
    config: DetectorConfig,
    scenario: ChangeScenario,
    trials: int = 10_000,
    horizon: Optional[int] = None,
    seed: int = 0,
    n_jobs: int = 1,
    key: Sequence[int] = (KEY_WADD,),
) -> DelayEstimate:
    """Mean detection delay with the change at the first sample.

    For i.i.d. streams the worst case over change times is attained at
    ``gamma = 1``, where delay ``tau - gamma + 1`` equals ``tau``.
    """
    if trials < 100:
        raise ValueError("estimate_wadd needs at least 100 trials")
    scenario = scenario.with_gamma(1)
    horizon = int(horizon or default_wadd_horizon(config, scenario))
    taus = run_trials(config, scenario, trials, horizon, seed, key, n_jobs)
    hit = taus > 0
    censored = int(trials - hit.sum())
    if censored > 0.01 * trials:
        raise HorizonTooShort(
            f"{censored} of {trials} trials did not alarm within {horizon} steps"
        )
    delays = taus[hit] - scenario.gamma + 1
    value, se = _mean_se(delays.astype(float))
    mean_tau = float(taus[hit].mean())
    assert value == mean_tau, "WADD must equal E_1[tau] for gamma=1"
    return DelayEstimate(value, se, int(trials), censored, mean_tau, horizon)


def estimate_mtfa(
    config: DetectorConfig,
    scenario: ChangeScenario,
    trials: int = 10_000,
    horizon: int = MAX_HORIZON,
    seed: int = 0,
    n_jobs: int = 1,
    key: Sequence[int] = (KEY_MTFA,),
) -> MTFAEstimate:
    """Mean stopping time on pre-change-only streams.

    Runs that survive the horizon count as ``horizon``; the estimate is then
    flagged as a lower bound.
    """
    if trials < 100:
        raise ValueError("estimate_mtfa needs at least 100 trials")
    scenario = scenario.with_gamma(INFINITY)
    taus = run_trials(config, scenario, trials, horizon, seed, key, n_jobs)
    censored = int((taus == 0).sum())
    obs = np.where(taus > 0, taus, horizon).astype(float)
    value, se = _mean_se(obs)
    return MTFAEstimate(
        value, se, int(trials), censored, censored > 0, int(trials - censored), int(obs.sum()), int(horizon)
    )


@dataclass(frozen=True)
class ConditionalDelay:
    gamma: int
    trials: int
    false_alarms: int
    detections: int
    missed: int
    delay: float
    delay_stderr: float


def estimate_conditional_delay(
    config: DetectorConfig,
    scenario: ChangeScenario,
    trials: int,
    horizon: Optional[int] = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> ConditionalDelay:
    """``E[tau - gamma + 1 | tau >= gamma]`` for a finite change point.

    A true detection has ``tau >= gamma``; ``tau < gamma`` is a false alarm.
    """
    if scenario.gamma == INFINITY:
        raise ValueError("scenario needs a finite change point")
    horizon = int(horizon or scenario.length)
    taus = run_trials(config, scenario, trials, horizon, seed, (KEY_DELAY,), n_jobs)
    detected = taus >= scenario.gamma
    false = (taus > 0) & ~detected
    delay, se = _mean_se((taus[detected] - scenario.gamma + 1).astype(float))
    return ConditionalDelay(
        scenario.gamma, int(trials), int(false.sum()), int(detected.sum()), int((taus == 0).sum()), delay, se
    )


# calibration ----------------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    threshold: float
    mtfa: MTFAEstimate
    iterations: int


def default_b_hi(config: DetectorConfig) -> float:
    # Pearson sums live on a much larger scale than log-likelihood sums
    return 1e3 if config.kind == "chisq" else 50.0


def calibrate_threshold(
    config: DetectorConfig,
    target_mtfa: float,
    scenario: ChangeScenario,
    seed: int = 0,
    trials: int = 1000,
    horizon: Optional[int] = None,
    b_lo: float = 0.0,
    b_hi: Optional[float] = None,
    rtol: float = 0.10,
    max_iter: int = 40,
    n_jobs: int = 1,
) -> Calibration:
    """Bisect on b until the estimated MTFA is within ``rtol`` of the target.

    Each probe reuses the same seeded trials, so the estimated MTFA is
    exactly non-decreasing in b and bisection is well posed.
    """
    if not target_mtfa > 1:
        raise ValueError("target_mtfa must exceed 1")
    horizon = int(horizon or math.ceil(10 * target_mtfa))
    b_hi = default_b_hi(config) if b_hi is None else float(b_hi)
    lo_target, hi_target = target_mtfa * (1 - rtol), target_mtfa * (1 + rtol)

    def probe(b):
        return estimate_mtfa(config.with_threshold(b), scenario, trials, horizon, seed, n_jobs, (KEY_CALIBRATE,))

    top = probe(b_hi)
    if top.value < lo_target:
        raise Unreachable(f"MTFA at b_hi={b_hi} is {top.value:.4g} < target {target_mtfa:.4g}")
    if top.value <= hi_target:
        return Calibration(b_hi, top, 1)
    lo, hi = float(b_lo), b_hi
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        est = probe(mid)
        if lo_target <= est.value <= hi_target:
            return Calibration(mid, est, it + 1)
        if est.value < target_mtfa:
            lo = mid
        else:
            hi = mid
    raise Unreachable(
        f"no threshold in [{b_lo}, {b_hi}] gives MTFA within {rtol:.0%} of {target_mtfa:.4g}"
    )


# sweeps --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    detector: str
    threshold: float
    mtfa: float
    mtfa_stderr: float
    wadd: float
    wadd_stderr: float
    trials: int
    censored: int


SWEEP_COLUMNS = ("detector", "threshold", "mtfa", "mtfa_stderr", "wadd", "wadd_stderr", "trials", "censored")


def sweep(
    configs: Sequence[DetectorConfig],
    scenario: ChangeScenario,
    threshold_grid,
    trials: int = 10_000,
    seed: int = 0,
    mtfa_horizon: int = MAX_HORIZON,
    wadd_horizon: Optional[int] = None,
    n_jobs: int = 1,
) -> dict:
    """Delay-vs-MTFA curve data for each detector.

    ``threshold_grid`` is either one ascending grid shared by all detectors
    or a sequence with one grid per detector. All thresholds of a detector
    share their trial seeds, so curves are monotone in b path by path.
    """
    grids = _per_detector_grids(configs, threshold_grid)
    out = {}
    for d, (cfg, grid) in enumerate(zip(configs, grids)):
        points = []
        for b in grid:
            c = cfg.with_threshold(b)
            m = estimate_mtfa(c, scenario, trials, mtfa_horizon, seed, n_jobs, (KEY_MTFA, d))
            wd = estimate_wadd(c, scenario, trials, wadd_horizon, seed, n_jobs, (KEY_WADD, d))
            points.append(
                SweepPoint(cfg.label, float(b), m.value, m.stderr, wd.value, wd.stderr, int(trials), m.censored)
            )
        out[cfg.label] = points
    return out


def _per_detector_grids(configs, threshold_grid):
    grid = list(threshold_grid)
    if not grid:
        raise ValueError("threshold grid is empty")
    if np.ndim(grid[0]) == 0:
        grids = [grid] * len(configs)
    else:
        grids = [list(g) for g in grid]
        if len(grids) != len(configs):
            raise ValueError("need one threshold grid per detector")
    for g in grids:
        if not g or any(b2 < b1 for b1, b2 in zip(g, g[1:])):
            raise ValueError(f"threshold grid must be non-empty and ascending: {g}")
    return grids


def write_sweep_csv(results: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for points in results.values():
            for p in points:
                writer.writerow([getattr(p, c) for c in SWEEP_COLUMNS])


def delay_at_mtfa(points: Sequence[SweepPoint], target: float) -> float:
    """Interpolate WADD at ``target`` MTFA, linear in ``log(MTFA)``."""
    pts = sorted(points, key=lambda p: p.mtfa)
    mt = np.log([p.mtfa for p in pts])
    wd = np.array([p.wadd for p in pts])
    lt = math.log(target)
    if lt < mt[0] or lt > mt[-1]:
        raise ValueError(f"target MTFA {target} outside swept range [{pts[0].mtfa:.4g}, {pts[-1].mtfa:.4g}]")
    return float(np.interp(lt, mt, wd))


# correctness reports ----------------------------------------------------------------


@dataclass(frozen=True)
class CorrectnessReport:
    pre_change_expectation: float
    pre_change_stderr: float
    post_change_expectation: float
    post_change_stderr: float
    pre_variance: float
    post_variance: float
    n: int
    correct: bool

    def to_dict(self) -> dict:
        return asdict(self)


def correctness_report(model: LikelihoodModel, truth: ChangeScenario, n: int = 100_000, seed: int = 0) -> CorrectnessReport:
    """Monte-Carlo check of the sign conditions on ``E[log Lhat]`` before and after a change."""
    if n < 10_000:
        raise ValueError("correctness_report needs n >= 10_000")
    pre_x = sample(truth.pre, trial_seed(seed, (KEY_REPORT,), 0), n)
    post_x = sample(truth.post, trial_seed(seed, (KEY_REPORT,), 1), n)
    lpre = log_lr(model, pre_x)
    lpost = log_lr(model, post_x)
    mpre, spre = _mean_se(lpre)
    mpost, spost = _mean_se(lpost)
    correct = (mpre + 3 * spre < 0) and (mpost - 3 * spost > 0)
    return CorrectnessReport(
        mpre, spre, mpost, spost, float(lpre.var(ddof=1)), float(lpost.var(ddof=1)), int(n), bool(correct)
    )


@dataclass(frozen=True)
class Decomposition:
    """Expected log-likelihood ratios rebuilt from KL divergences."""

    pre_change: float
    pre_change_stderr: float
    post_change: float
    post_change_stderr: float
    terms: dict


def _surrogates(model: LikelihoodModel, truth: ChangeScenario):
    """(fhat, ghat) laws used by the model, as mixtures."""
    if isinstance(model, Mix):
        return model.pre, model.post
    if isinstance(model, Sinmix):
        return model.pre, GaussianMixture.single(model.post_moments.mean, model.post_moments.variance)
    if isinstance(model, Single):
        return (
            GaussianMixture.single(model.pre_moments.mean, model.pre_moments.variance),
            GaussianMixture.single(model.post_moments.mean, model.post_moments.variance),
        )
    if isinstance(model, RobustShift):
        return model.pre, shift(model.pre, model.kappa)
    raise TypeError(f"unsupported model {type(model).__name__}")


def kl_decomposition(model: LikelihoodModel, truth: ChangeScenario, n: int = 200_000, seed: int = 0) -> Decomposition:
    """Predict both expectations from independent ``kl_mc`` runs.

    With true laws ``f, g`` and surrogates ``fhat, ghat``::

        E_f[log Lhat] = KL(f || fhat) - KL(f || ghat)
        E_g[log Lhat] = KL(g || fhat) - KL(g || ghat)

    where a divergence between identical laws is exactly zero.
    """
    f, g = truth.pre, truth.post
    fhat, ghat = _surrogates(model, truth)
    counter = iter(range(1000))

    def kl(p, q):
        if p == q:
            return 0.0, 0.0
        est = kl_mc(p, q, n, trial_seed(seed, (KEY_REPORT, 9), next(counter)))
        return est.value, est.stderr

    terms = {
        "KL(f||fhat)": kl(f, fhat),
        "KL(f||ghat)": kl(f, ghat),
        "KL(g||fhat)": kl(g, fhat),
        "KL(g||ghat)": kl(g, ghat),
    }
    a, sa = terms["KL(f||fhat)"]
    c, sc = terms["KL(f||ghat)"]
    d, sd = terms["KL(g||fhat)"]
    e, se = terms["KL(g||ghat)"]
    return Decomposition(a - c, math.hypot(sa, sc), d - e, math.hypot(sd, se), terms)


# robust shift study ------------------------------------------------------------------


@dataclass(frozen=True)
class RobustRow:
    kappa: float
    detection_rate: float
    mean_delay: float
    detections: int
    trials: int


def robust_shift_study(
    pre: GaussianMixture,
    eta: float,
    kappa_list: Sequence[float],
    b: float,
    trials: int = 1000,
    horizon: int = 1000,
    seed: int = 0,
    n_jobs: int = 1,
) -> list:
    """Detection rate and delay of the shift-robust CUSUM for several design shifts.

    The true post-change law is ``pre`` shifted by ``eta``; the change
    happens at the first sample.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    scenario = ChangeScenario(pre, shift(pre, eta), 1, horizon)
    rows = []
    for kappa in kappa_list:
        cfg = DetectorConfig("cusum_robust", b, pre=pre, kappa=float(kappa))
        taus = run_trials(cfg, scenario, trials, horizon, seed, (KEY_ROBUST,), n_jobs)
        hit = taus > 0
        delay = float(taus[hit].mean()) if hit.any() else math.nan
        rows.append(RobustRow(float(kappa), float(hit.mean()), delay, int(hit.sum()), int(trials)))
    return rows
