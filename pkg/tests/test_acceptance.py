"""Acceptance suite: one recorded PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdicts are
repeated in the terminal summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np
import pytest

from oodqcd.cli import main
from oodqcd.detect import DetectorConfig, Mix, Single, Sinmix, threshold_for_far
from oodqcd.dist import GaussianMixture, MomentSummary, kl_gaussian, kl_mc, moments, sample, Gaussian
from oodqcd.evaluate import (
    KEY_MTFA,
    calibrate_threshold,
    correctness_report,
    estimate_mtfa,
    estimate_wadd,
    kl_decomposition,
    robust_shift_study,
    run_trials,
)
from oodqcd.simgen import TrajectoryPair, ade, bimodal_scenario, fde, late_shift_scenario, rmse, ChangeScenario

pytestmark = pytest.mark.slow

N0 = GaussianMixture.single(0, 1)
N1 = GaussianMixture.single(1, 1)
SHIFT = ChangeScenario(N0, N1, gamma=1, length=1)
SINGLE = DetectorConfig("cusum_single", 1.0, pre=MomentSummary(0, 1), post=MomentSummary(1, 1))
ALPHAS = (1e-2, 1e-3, 1e-4)


def test_criterion_1_delay_law(verdict):
    t0 = time.perf_counter()
    ratios = []
    for alpha in ALPHAS:
        b = threshold_for_far(alpha)
        est = estimate_wadd(SINGLE.with_threshold(b), SHIFT, trials=10_000, seed=1)
        ratios.append(est.value / (b / 0.5))
    elapsed = time.perf_counter() - t0
    in_band = all(0.8 <= r <= 1.4 for r in ratios)
    decreasing = all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:]))
    ok = in_band and decreasing and elapsed < 60
    verdict(1, ok, f"WADD/(b/D) = {[round(r, 4) for r in ratios]} in {elapsed:.1f}s")
    assert ok


def test_criterion_2_false_alarm_rate(verdict):
    t0 = time.perf_counter()
    rows = []
    ok = True
    for alpha in ALPHAS:
        b = threshold_for_far(alpha)
        est = estimate_mtfa(SINGLE.with_threshold(b), SHIFT, trials=1000, horizon=int(10 / alpha), seed=2)
        bound = alpha + 3 * math.sqrt(alpha * (1 - alpha) / est.steps)
        ok &= est.far <= bound
        rows.append(f"alpha={alpha:g}: far={est.far:.3g} <= {bound:.3g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    verdict(2, ok, "; ".join(rows) + f" in {elapsed:.1f}s")
    assert ok


def test_criterion_3_ordering_at_matched_mtfa(verdict):
    t0 = time.perf_counter()
    sc = bimodal_scenario()
    f, g = sc.pre, sc.post
    target = 1000
    detectors = [
        DetectorConfig("cusum_mix", 1.0, pre=f, post=g),
        DetectorConfig("cusum_sinmix", 1.0, pre=f, post=moments(g)),
        DetectorConfig("cusum_single", 1.0, pre=moments(f), post=moments(g)),
        DetectorConfig("zscore", 1.0, window=10),
        DetectorConfig("chisq", 1.0, pre=f, post=g, window=10),
    ]
    wadd, se, mtfa = [], [], []
    for d, cfg in enumerate(detectors):
        cal = calibrate_threshold(cfg, target, sc, seed=3, trials=2000, rtol=0.05)
        c = cfg.with_threshold(cal.threshold)
        m = estimate_mtfa(c, sc, trials=10_000, horizon=10 * target, seed=4, key=(KEY_MTFA, d))
        w = estimate_wadd(c, sc, trials=10_000, seed=5)
        mtfa.append(m.value)
        wadd.append(w.value)
        se.append(w.stderr)
    elapsed = time.perf_counter() - t0
    matched = all(abs(m - target) <= 0.1 * target for m in mtfa)
    gaps = [
        wadd[i + 1] - wadd[i] >= -2 * math.hypot(se[i], se[i + 1]) for i in range(len(detectors) - 1)
    ]
    ok = matched and all(gaps) and elapsed < 300
    names = [c.kind for c in detectors]
    detail = ", ".join(f"{n}={w:.3g}±{s:.2g} (MTFA {m:.0f})" for n, w, s, m in zip(names, wadd, se, mtfa))
    broken = [f"{names[i]} <= {names[i + 1]}" for i, g_ok in enumerate(gaps) if not g_ok]
    verdict(3, ok, f"WADD {detail}; violated: {broken or 'none'} in {elapsed:.0f}s")
    assert ok


def _variants(sc):
    f, g = sc.pre, sc.post
    return [Mix(f, g), Sinmix(f, moments(g)), Single(moments(f), moments(g))]


def test_criterion_4_correctness_structure(verdict):
    t0 = time.perf_counter()
    sc = bimodal_scenario()
    reps = [correctness_report(m, sc, n=200_000, seed=6) for m in _variants(sc)]
    signs = all(
        r.pre_change_expectation < -3 * r.pre_change_stderr and r.post_change_expectation > 3 * r.post_change_stderr
        for r in reps
    )
    post = [abs(r.post_change_expectation) for r in reps]
    ordered = post[0] >= post[1] >= post[2]
    elapsed = time.perf_counter() - t0
    ok = signs and ordered and elapsed < 30
    verdict(4, ok, f"pre={[round(r.pre_change_expectation, 4) for r in reps]} post={[round(p, 4) for p in post]} in {elapsed:.1f}s")
    assert ok


def test_criterion_5_kl_identities(verdict):
    sc = bimodal_scenario()
    f, g = sc.pre, sc.post
    lines, ok = [], True
    mix = correctness_report(Mix(f, g), sc, n=200_000, seed=7)
    kfg = kl_mc(f, g, 200_000, 8)
    kgf = kl_mc(g, f, 200_000, 9)
    ok &= abs(mix.pre_change_expectation + kfg.value) <= 3 * math.hypot(mix.pre_change_stderr, kfg.stderr)
    ok &= abs(mix.post_change_expectation - kgf.value) <= 3 * math.hypot(mix.post_change_stderr, kgf.stderr)
    lines.append(f"mix pre {mix.pre_change_expectation:.4f} vs -KL {-kfg.value:.4f}, post {mix.post_change_expectation:.4f} vs KL {kgf.value:.4f}")
    for model in _variants(sc)[1:]:
        rep = correctness_report(model, sc, n=200_000, seed=7)
        dec = kl_decomposition(model, sc, n=200_000, seed=10)
        ok &= abs(rep.pre_change_expectation - dec.pre_change) <= 3 * math.hypot(rep.pre_change_stderr, dec.pre_change_stderr)
        ok &= abs(rep.post_change_expectation - dec.post_change) <= 3 * math.hypot(rep.post_change_stderr, dec.post_change_stderr)
        lines.append(
            f"{type(model).__name__.lower()} pre {rep.pre_change_expectation:.4f} vs {dec.pre_change:.4f}, "
            f"post {rep.post_change_expectation:.4f} vs {dec.post_change:.4f}"
        )
    verdict(5, ok, "; ".join(lines))
    assert ok


def test_criterion_6_robust_shift(verdict):
    t0 = time.perf_counter()
    b = threshold_for_far(1e-4)
    cfg = DetectorConfig("cusum_robust", b, pre=N0, kappa=1.0)
    m = estimate_mtfa(cfg, ChangeScenario(N0, N0), trials=1000, horizon=200_000, seed=11)
    rows = robust_shift_study(N0, 2.5, [1.0, 10.0], b, trials=1000, horizon=1000, seed=12)
    elapsed = time.perf_counter() - t0
    ok = m.value >= 1e4 and rows[0].detection_rate >= 0.99 and rows[1].detection_rate <= 0.5 and elapsed < 60
    verdict(
        6, ok,
        f"b={b:.3f} MTFA(kappa=1)={m.value:.0f} (censored {m.censored}); "
        f"detection kappa=1: {rows[0].detection_rate:.3f}, kappa=10: {rows[1].detection_rate:.3f} in {elapsed:.1f}s",
    )
    assert ok


def test_criterion_7_trajectory_scenario(verdict):
    sc = late_shift_scenario()
    cfg = DetectorConfig("cusum_mix", 7.0, pre=sc.pre, post=sc.post)
    taus = run_trials(cfg, sc, 1000, sc.length, seed=13, key=(7, 1))
    pre_only = run_trials(cfg, sc.with_gamma(math.inf), 1000, sc.length, seed=13, key=(7, 2))
    hit = float(np.mean(taus >= sc.gamma))
    quiet = float(np.mean(pre_only == 0))
    ok = hit >= 0.95 and quiet >= 0.95
    verdict(7, ok, f"alarm with tau>={sc.gamma}: {hit:.3f}; no alarm on pre-only runs: {quiet:.3f}")
    assert ok


def test_criterion_8_metric_oracles(verdict):
    pair = TrajectoryPair([[0.0, 0.0], [3.0, 4.0]], [[0.0, 0.0], [0.0, 0.0]])
    fixtures = ade(pair) == 2.5 and fde(pair) == 5.0 and rmse(pair) == math.sqrt(12.5)
    rng = np.random.default_rng(14)
    rmse_ok = all(
        rmse(p) >= ade(p) - 1e-12
        for p in (TrajectoryPair(rng.normal(size=(12, 2)) * 5, rng.normal(size=(12, 2)) * 5) for _ in range(1000))
    )
    pairs = [((0, 1), (1, 1)), ((0, 4), (0, 1)), ((2, 0.5), (-1, 2)), ((0, 1), (0, 3)), ((-3, 2), (1, 0.7))]
    kl_ok = True
    worst = 0.0
    for i, ((m1, v1), (m2, v2)) in enumerate(pairs):
        est = kl_mc(GaussianMixture.single(m1, v1), GaussianMixture.single(m2, v2), 1_000_000, 100 + i)
        z = abs(est.value - kl_gaussian(Gaussian(m1, v1), Gaussian(m2, v2))) / est.stderr
        worst = max(worst, z)
        kl_ok &= z <= 3
    ok = fixtures and rmse_ok and kl_ok
    verdict(8, ok, f"fixtures={fixtures} rmse>=ade={rmse_ok} kl_mc worst |z|={worst:.2f}")
    assert ok


def _cli_artifacts(tmp_path, out):
    x = sample(GaussianMixture((0.5, 0.5), (0, 4), (1, 1)), 15, 400)
    csv_path = tmp_path / "errors.csv"
    csv_path.write_text("time,error\n" + "".join(f"{i + 1},{float(v)!r}\n" for i, v in enumerate(x)))
    n0 = {"components": [{"weight": 1.0, "mean": 0.0, "variance": 1.0}]}
    n1 = {"components": [{"weight": 1.0, "mean": 1.0, "variance": 1.0}]}
    cfg = {
        "seed": 16,
        "detectors": [
            {"kind": "cusum_mix", "threshold": 3.0, "pre": n0, "post": n1},
            {"kind": "chisq", "threshold": 3.0, "pre": n0, "post": n1, "window": 5},
        ],
        "scenario": {"pre": n0, "post": n1, "gamma": 50, "length": 300},
        "trials": 200,
        "target_mtfa": 50,
        "mtfa_horizon": 2000,
        "report_n": 10_000,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    base = ["--config", str(cfg_path), "--out", str(out)]
    codes = [
        main(["--seed", "16", "--out", str(out), "fit", str(csv_path)]),
        main(base + ["detect"]),
        main(base + ["detect", "--detector", "1", "--stream", str(csv_path)]),
        main(base + ["calibrate"]),
        main(base + ["sweep", "--thresholds", "1,2,3"]),
        main(base + ["report"]),
    ]
    assert codes == [0] * len(codes)
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_9_determinism(tmp_path, verdict):
    a = _cli_artifacts(tmp_path, tmp_path / "a")
    b = _cli_artifacts(tmp_path, tmp_path / "b")
    cli_ok = a == b
    sc = bimodal_scenario()
    cfg = DetectorConfig("cusum_sinmix", 4.0, pre=sc.pre, post=moments(sc.post))
    serial = (estimate_wadd(cfg, sc, 500, seed=17, n_jobs=1), estimate_mtfa(cfg, sc, 200, 5000, seed=17, n_jobs=1))
    parallel = (estimate_wadd(cfg, sc, 500, seed=17, n_jobs=3), estimate_mtfa(cfg, sc, 200, 5000, seed=17, n_jobs=3))
    jobs_ok = serial == parallel
    ok = cli_ok and jobs_ok
    verdict(9, ok, f"{len(a)} CLI artifacts identical={cli_ok}; aggregates invariant to n_jobs={jobs_ok}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
