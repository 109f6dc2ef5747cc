"""Error streams: synthetic change scenarios and trajectory-file ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .dist import GaussianMixture, as_generator, sample
from .exceptions import ConfigError, NonFiniteValue, ParseError, SchemaError

INFINITY = math.inf


@dataclass(frozen=True)
class ChangeScenario:
    """Pre-change law for ``t < gamma``, post-change law for ``t >= gamma`` (1-based)."""

    pre: GaussianMixture
    post: GaussianMixture
    gamma: Union[int, float] = INFINITY
    length: int = 1

    def __post_init__(self):
        if self.gamma != INFINITY:
            if int(self.gamma) != self.gamma or self.gamma < 1:
                raise ConfigError(f"gamma must be a positive integer or infinity, got {self.gamma}")
            object.__setattr__(self, "gamma", int(self.gamma))
        if int(self.length) != self.length or self.length < 1:
            raise ConfigError(f"length must be a positive integer, got {self.length}")
        object.__setattr__(self, "length", int(self.length))

    def with_gamma(self, gamma) -> "ChangeScenario":
        return ChangeScenario(self.pre, self.post, gamma, self.length)

    def draw(self, rng, start: int, n: int) -> np.ndarray:
        """Draw stream positions ``start+1 .. start+n`` (1-based) from ``rng``.

        Pre- and post-change segments are drawn in that order, so the
        result depends only on the generator state and the segment split.
        """
        n_pre = int(min(max(self.gamma - 1 - start, 0), n)) if self.gamma != INFINITY else n
        parts = []
        if n_pre:
            parts.append(sample(self.pre, rng, n_pre))
        if n - n_pre:
            parts.append(sample(self.post, rng, n - n_pre))
        if not parts:
            return np.empty(0)
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    @classmethod
    def from_dict(cls, obj: dict) -> "ChangeScenario":
        if not isinstance(obj, dict):
            raise ConfigError(f"scenario must be an object, got {obj!r}")
        if "preset" in obj:
            try:
                base = PRESETS[obj["preset"]]()
            except KeyError:
                raise ConfigError(f"unknown preset {obj['preset']!r}; expected one of {sorted(PRESETS)}") from None
            obj = {**base.to_dict(), **{k: v for k, v in obj.items() if k != "preset"}}
        try:
            gamma = obj.get("gamma", "inf")
            if isinstance(gamma, str):
                if gamma.lower() not in ("inf", "infinity"):
                    raise ConfigError(f"gamma must be an integer or 'inf', got {gamma!r}")
                gamma = INFINITY
            return cls(
                GaussianMixture.from_dict(obj["pre"]),
                GaussianMixture.from_dict(obj["post"]),
                gamma,
                obj.get("length", 1),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario is missing {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"scenario: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "pre": self.pre.to_dict(),
            "post": self.post.to_dict(),
            "gamma": "inf" if self.gamma == INFINITY else self.gamma,
            "length": self.length,
        }


def late_shift_scenario(gamma=490, length=600) -> ChangeScenario:
    """Trajectory-error laws with a late change: ADE around 1.7 m before, 4.2 m after.

    The in-distribution law is a tight two-component mixture; the
    out-of-distribution law is shifted and more dispersed.
    """
    pre = GaussianMixture((0.6, 0.4), (1.2, 2.4), (0.09, 0.25))
    post = GaussianMixture((0.5, 0.5), (3.2, 5.1), (0.64, 1.0))
    return ChangeScenario(pre, post, gamma, length)


def bimodal_scenario(gamma=1, length=1000) -> ChangeScenario:
    """Unit-variance two-component laws whose overall means differ by 2.5."""
    pre = GaussianMixture((0.6, 0.4), (0.0, 3.0), (1.0, 1.0))
    post = GaussianMixture((0.4, 0.6), (2.5, 4.5), (1.0, 1.0))
    return ChangeScenario(pre, post, gamma, length)


PRESETS = {"late_shift": late_shift_scenario, "bimodal": bimodal_scenario}


def generate(scenario: ChangeScenario, rng_seed) -> np.ndarray:
    """Sample a full stream of ``scenario.length`` errors with the change at gamma."""
    return scenario.draw(as_generator(rng_seed), 0, scenario.length)


# Trajectory metrics -----------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryPair:
    predicted: np.ndarray
    truth: np.ndarray
    scene_id: str = ""

    def __post_init__(self):
        p = np.asarray(self.predicted, dtype=float)
        t = np.asarray(self.truth, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape != t.shape:
            raise ValueError(f"expected two (L, 2) arrays, got {p.shape} and {t.shape}")
        if p.shape[0] < 1:
            raise ValueError("trajectories need at least one frame")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
            raise ValueError("trajectory coordinates must be finite")
        object.__setattr__(self, "predicted", p)
        object.__setattr__(self, "truth", t)

    def __len__(self):
        return self.predicted.shape[0]

    def displacements(self) -> np.ndarray:
        """Per-frame Euclidean errors."""
        return np.hypot(*(self.predicted - self.truth).T)


def ade(pair: TrajectoryPair) -> float:
    return float(np.mean(pair.displacements()))


def fde(pair: TrajectoryPair) -> float:
    return float(pair.displacements()[-1])


def rmse(pair: TrajectoryPair) -> float:
    return float(np.sqrt(np.mean(pair.displacements() ** 2)))


METRICS = {"ade": ade, "fde": fde, "rmse": rmse}


def error_stream(pairs, metric: str = "ade") -> np.ndarray:
    """One scalar error per scene, in scene order."""
    try:
        fn = METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}") from None
    return np.array([fn(p) for p in pairs], dtype=float)


# CSV ingestion ------------------------------------------------------------------

ERROR_COLUMNS = ("time", "error")
TRAJECTORY_COLUMNS = ("scene_id", "frame", "pred_x", "pred_y", "true_x", "true_y")


def _float(text: str, row: int, column: str) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", row) from None
    if not math.isfinite(v):
        raise NonFiniteValue(f"column {column!r}: non-finite value {text!r}", row)
    return v


def _int(text: str, row: int, column: str) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        raise ParseError(f"column {column!r}: expected an integer, got {text!r}", row) from None


def ingest_csv(path):
    """Read an error-stream or trajectory CSV, chosen by its header.

    Returns a float array for ``time,error`` files and a list of
    :class:`TrajectoryPair` (one per scene, in order of first appearance)
    for trajectory files. Row numbers in errors count the header as row 1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        if "error" in header or header[:1] == ["time"]:
            return _read_errors(reader, header)
        if "scene_id" in header:
            return _read_trajectories(reader, header)
        missing = [c for c in ERROR_COLUMNS if c not in header]
        raise SchemaError(f"{path}: unrecognised header {header}; missing column(s) {missing}")


def _index(header, columns):
    missing = [c for c in columns if c not in header]
    if missing:
        raise SchemaError(f"missing column {missing[0]!r}")
    return [header.index(c) for c in columns]


def _read_errors(reader, header) -> np.ndarray:
    it, ie = _index(header, ERROR_COLUMNS)
    values = []
    last = 0
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", rownum)
        t = _int(row[it], rownum, "time")
        if t != last + 1:
            raise ParseError(f"time must increase by one from 1; got {t} after {last}", rownum)
        last = t
        values.append(_float(row[ie], rownum, "error"))
    return np.array(values, dtype=float)


def _read_trajectories(reader, header) -> list:
    idx = _index(header, TRAJECTORY_COLUMNS)
    scenes: dict = {}
    for rownum, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", rownum)
        sid = row[idx[0]].strip()
        frame = _int(row[idx[1]], rownum, "frame")
        coords = [_float(row[i], rownum, c) for i, c in zip(idx[2:], TRAJECTORY_COLUMNS[2:])]
        frames = scenes.setdefault(sid, {})
        if frame in frames:
            raise ParseError(f"duplicate frame {frame} in scene {sid!r}", rownum)
        frames[frame] = (coords, rownum)
    pairs = []
    for sid, frames in scenes.items():
        order = sorted(frames)
        if order != list(range(1, len(order) + 1)):
            raise ParseError(f"scene {sid!r}: frames must be contiguous from 1, got {order}", frames[order[-1]][1])
        arr = np.array([frames[f][0] for f in order], dtype=float)
        pairs.append(TrajectoryPair(arr[:, 0:2], arr[:, 2:4], scene_id=sid))
    return pairs
