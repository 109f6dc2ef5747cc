"""Command-line entry point: ``oodqcd --seed S [--config C] [--out DIR] <command>``.

Exit codes: 0 success, 2 configuration / input errors, 3 experiments that
cannot be completed (degenerate fits, unreachable calibration targets,
horizons too short for the requested delay estimate).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import evaluate as ev
from .detect import DetectorConfig, run
from .dist import EmConfig, em_fit
from .exceptions import (
    ConfigError,
    DegenerateData,
    HorizonTooShort,
    OODQCDError,
    ParseError,
    SchemaError,
    TooFewPoints,
    Unreachable,
    ZeroSpread,
)
from .simgen import ChangeScenario, error_stream, generate, ingest_csv

log = logging.getLogger("oodqcd")

EXIT_CONFIG = 2
EXIT_EXPERIMENT = 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


@dataclass
class ExperimentConfig:
    seed: int
    detectors: list
    scenario: Optional[ChangeScenario] = None
    input: Optional[str] = None
    trials: int = 1000
    output_dir: str = "out"
    target_mtfa: Optional[float] = None
    thresholds: Optional[list] = None
    grids: list = field(default_factory=list)
    mtfa_horizon: int = ev.MAX_HORIZON
    wadd_horizon: Optional[int] = None
    report_n: int = 100_000
    metric: str = "ade"

    @classmethod
    def load(cls, path, seed=None, out=None) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(obj, seed, out)

    @classmethod
    def from_dict(cls, obj, seed=None, out=None) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise CliError("config must be a JSON object")
        known = {
            "seed", "detectors", "scenario", "trials", "output_dir", "target_mtfa", "thresholds",
            "mtfa_horizon", "wadd_horizon", "report_n", "metric",
        }
        extra = set(obj) - known
        if extra:
            raise CliError(f"unknown config fields: {sorted(extra)}")
        seed = seed if seed is not None else obj.get("seed")
        if seed is None:
            raise CliError("a seed is required (--seed or config 'seed')")
        raw = obj.get("detectors")
        if not isinstance(raw, list) or not raw:
            raise CliError("config needs a non-empty 'detectors' list")
        try:
            detectors = [DetectorConfig.from_dict(d) for d in raw]
        except ConfigError as exc:
            raise CliError(f"detector: {exc}") from None
        grids = [d.get("grid") for d in raw]
        scenario, inp = None, None
        sc = obj.get("scenario")
        if isinstance(sc, dict) and "input" in sc:
            inp = str(sc["input"])
        elif sc is not None:
            try:
                scenario = ChangeScenario.from_dict(sc)
            except (ConfigError, OODQCDError) as exc:
                raise CliError(f"scenario: {exc}") from None
        cfg = cls(
            seed=_int(seed, "seed", lo=0),
            detectors=detectors,
            scenario=scenario,
            input=inp,
            trials=_int(obj.get("trials", 1000), "trials", lo=100),
            output_dir=str(out or obj.get("output_dir", "out")),
            target_mtfa=_float(obj["target_mtfa"], "target_mtfa") if "target_mtfa" in obj else None,
            thresholds=[_float(b, "thresholds") for b in obj["thresholds"]] if "thresholds" in obj else None,
            grids=grids,
            mtfa_horizon=_int(obj.get("mtfa_horizon", ev.MAX_HORIZON), "mtfa_horizon", lo=1),
            wadd_horizon=_int(obj["wadd_horizon"], "wadd_horizon", lo=1) if obj.get("wadd_horizon") else None,
            report_n=_int(obj.get("report_n", 100_000), "report_n", lo=10_000),
            metric=str(obj.get("metric", "ade")),
        )
        return cfg

    def require_scenario(self, command) -> ChangeScenario:
        if self.scenario is None:
            raise CliError(f"'{command}' needs a synthetic scenario with 'pre' and 'post' laws")
        return self.scenario


def _int(v, name, lo=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise CliError(f"{name} must be an integer, got {v!r}")
    v = int(v)
    if lo is not None and v < lo:
        raise CliError(f"{name} must be >= {lo}, got {v}")
    return v


def _float(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CliError(f"{name} must be a number, got {v!r}")
    return float(v)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _outdir(args, cfg=None) -> Path:
    out = Path(args.out or (cfg.output_dir if cfg else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise CliError(f"'{args.command}' needs --config")
    return ExperimentConfig.load(args.config, args.seed, args.out)


def _read_stream(path, metric="ade") -> np.ndarray:
    try:
        data = ingest_csv(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except (ParseError, SchemaError) as exc:
        raise CliError(f"{path}: {exc}") from None
    if isinstance(data, list):
        return error_stream(data, metric)
    return data


# commands -------------------------------------------------------------------------


def cmd_fit(args) -> int:
    if args.seed is None:
        raise CliError("a seed is required (--seed)")
    x = _read_stream(args.input)
    out = _outdir(args)
    try:
        res = em_fit(x, args.k, EmConfig())
    except (DegenerateData, TooFewPoints) as exc:
        raise CliError(f"fit failed: {exc}", EXIT_EXPERIMENT) from None
    gmm_path = out / (args.name + ".json")
    _write_json(gmm_path, res.mixture.to_dict())
    summary = {
        "input": str(args.input),
        "n": int(x.size),
        "k": int(args.k),
        "log_likelihood": res.log_likelihood,
        "iterations": res.n_iter,
        "converged": res.converged,
        "components": res.mixture.to_dict()["components"],
    }
    _write_json(out / (args.name + "_summary.json"), summary)
    print(f"wrote {gmm_path} log_likelihood={res.log_likelihood!r} iterations={res.n_iter}")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    if not 0 <= args.detector < len(cfg.detectors):
        raise CliError(f"--detector {args.detector} out of range (config has {len(cfg.detectors)})")
    det = cfg.detectors[args.detector]
    source = args.stream or cfg.input
    if source is None and cfg.scenario is None:
        raise CliError("detect needs --stream, a scenario 'input', or a synthetic scenario")
    out = _outdir(args, cfg)
    if source is not None:
        stream = _read_stream(source, cfg.metric)
    else:
        stream = generate(cfg.scenario, ev.trial_seed(cfg.seed, (0,), 0))
    try:
        trace = run(det, stream)
    except ZeroSpread as exc:
        raise CliError(f"{det.label}: {exc}", EXIT_EXPERIMENT) from None
    path = out / "trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time", "sample", "statistic", "alarmed"))
        for i in range(len(trace)):
            w.writerow((i + 1, repr(float(trace.samples[i])), repr(float(trace.statistics[i])), int(trace.alarmed[i])))
    if trace.stopping_time is not None:
        print(f"ALARM t={trace.stopping_time}")
    else:
        print(f"NO_ALARM n={len(trace)}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    scenario = cfg.require_scenario("calibrate")
    target = args.target_mtfa or cfg.target_mtfa
    if target is None or not target > 1:
        raise CliError("calibrate needs a target MTFA > 1 (--target-mtfa or config 'target_mtfa')")
    out = _outdir(args, cfg)
    results = []
    for i, det in enumerate(cfg.detectors):
        try:
            cal = ev.calibrate_threshold(det, target, scenario, seed=cfg.seed, trials=cfg.trials)
        except Unreachable as exc:
            raise CliError(f"{det.label}: {exc}", EXIT_EXPERIMENT) from None
        check = ev.estimate_mtfa(
            det.with_threshold(cal.threshold), scenario, cfg.trials, int(10 * target), cfg.seed, key=(ev.KEY_MTFA, i)
        )
        results.append(
            {
                "detector": det.label,
                "threshold": cal.threshold,
                "target_mtfa": target,
                "mtfa": check.value,
                "mtfa_stderr": check.stderr,
                "censored": check.censored,
                "iterations": cal.iterations,
            }
        )
        print(f"{det.label} threshold={cal.threshold!r} mtfa={check.value!r} stderr={check.stderr!r}")
    _write_json(out / "calibration.json", results)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    scenario = cfg.require_scenario("sweep")
    if args.thresholds:
        try:
            grid = [float(b) for b in args.thresholds.split(",")]
        except ValueError:
            raise CliError(f"--thresholds must be comma-separated numbers, got {args.thresholds!r}") from None
        grids = [grid] * len(cfg.detectors)
    elif cfg.thresholds:
        grids = [cfg.thresholds] * len(cfg.detectors)
    else:
        if any(g is None for g in cfg.grids):
            raise CliError("sweep needs --thresholds, config 'thresholds', or a 'grid' on every detector")
        grids = cfg.grids
    for g in grids:
        if not g or any(b2 < b1 for b1, b2 in zip(g, g[1:])):
            raise CliError(f"threshold grid must be non-empty and ascending: {g}")
    out = _outdir(args, cfg)
    try:
        results = ev.sweep(
            cfg.detectors, scenario, grids, cfg.trials, cfg.seed, cfg.mtfa_horizon, cfg.wadd_horizon
        )
    except HorizonTooShort as exc:
        raise CliError(str(exc), EXIT_EXPERIMENT) from None
    path = out / "sweep.csv"
    ev.write_sweep_csv(results, path)
    print(f"wrote {path} ({sum(len(p) for p in results.values())} rows)")
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    scenario = cfg.require_scenario("report")
    out = _outdir(args, cfg)
    for i, det in enumerate(cfg.detectors):
        if det.model is None:
            log.warning("%s has no likelihood model; skipped", det.label)
            continue
        rep = ev.correctness_report(det.model, scenario, cfg.report_n, cfg.seed)
        dec = ev.kl_decomposition(det.model, scenario, cfg.report_n, cfg.seed)
        obj = {"detector": det.label, "kind": det.kind, **rep.to_dict(), "kl_decomposition": asdict(dec)}
        path = out / f"report_{i}_{det.label}.json"
        _write_json(path, obj)
        print(f"{det.label} correct={str(rep.correct).lower()} -> {path}")
    return 0


# parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oodqcd", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, help="master seed (mandatory unless the config carries one)")
    p.add_argument("--config", help="experiment configuration JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a Gaussian mixture to an error-stream CSV")
    f.add_argument("input")
    f.add_argument("--k", type=int, default=2)
    f.add_argument("--name", default="gmm", help="basename of the output files")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("detect", help="run one detector over a stream and write its trace")
    d.add_argument("--stream", help="error-stream or trajectory CSV (default: simulate the scenario)")
    d.add_argument("--detector", type=int, default=0, help="index into the config's detectors")
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("calibrate", help="find thresholds for a target MTFA")
    c.add_argument("--target-mtfa", type=float)
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sweep", help="delay-vs-MTFA curve data")
    s.add_argument("--thresholds", help="comma-separated ascending thresholds for every detector")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="correctness reports of the likelihood approximations")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
