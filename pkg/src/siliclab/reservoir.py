"""NARMA-10 benchmark harness and timing-regime metrics.

The device substrate is treated as a fixed dynamical system: inputs are
encoded as job drive levels, and the only observables are handshake
timings and temperature.  A ridge-regressed linear readout over a short
delta_t window is the entire trained component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .swh import ChannelConfig, HandshakeRecord, run_session
from .twin import DeviceProfile, DigitalTwin

RIDGE_LAMBDA = 1e-6
DIVERGENCE_GUARD = 10.0
FEATURE_WINDOW = 10   # delta_t lags per readout row


class NarmaDivergenceError(RuntimeError):
    """NARMA-10 run exceeded the divergence guard."""


@dataclass(frozen=True)
class NarmaSeries:
    u: tuple[float, ...]
    y: tuple[float, ...]
    warmup: int


@dataclass(frozen=True)
class ReadoutWeights:
    w_out: tuple[float, ...]

    def __post_init__(self):
        if not all(math.isfinite(w) for w in self.w_out):
            raise ValueError("readout weights must be finite")

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=float) @ np.array(self.w_out)


@dataclass(frozen=True)
class SweepConfig:
    voltages: tuple[float, ...]
    frequencies: tuple[float, ...]
    difficulties: tuple[float, ...]
    samples_per_cell: int = 500
    window_seconds: float = 2.0

    def __post_init__(self):
        if not (self.voltages and self.frequencies and self.difficulties):
            raise ValueError("sweep grids must be non-empty")
        if self.samples_per_cell < 2:
            raise ValueError("samples_per_cell must be >= 2")


def narma10(u: Sequence[float], warmup: int = 20,
            guard: float = DIVERGENCE_GUARD) -> NarmaSeries:
    """Tenth-order NARMA recurrence with y[0..9] = 0."""
    u = tuple(float(v) for v in u)
    if any(not 0.0 <= v <= 0.5 for v in u):
        raise ValueError("u values must lie in [0, 0.5]")
    if len(u) <= warmup + 10:
        raise ValueError("sequence must be longer than warmup + 10")
    y = [0.0] * 10
    for t in range(9, len(u) - 1):
        nxt = (0.3 * y[t] + 0.05 * y[t] * sum(y[t - 9:t + 1])
               + 1.5 * u[t - 9] * u[t] + 0.1)
        if abs(nxt) > guard:
            raise NarmaDivergenceError(f"|y[{t + 1}]| = {abs(nxt):.3g} > {guard}")
        y.append(nxt)
    return NarmaSeries(u=u, y=tuple(y), warmup=warmup)


def random_narma_series(length: int, seed: int, warmup: int = 20,
                        max_attempts: int = 50) -> NarmaSeries:
    """Seeded uniform [0, 0.5] input; resamples if the guard trips."""
    rng = np.random.Generator(np.random.Philox(key=seed ^ 0x4E41524D41000000))
    for _ in range(max_attempts):
        u = rng.random(length) * 0.5
        try:
            return narma10(u, warmup=warmup)
        except NarmaDivergenceError:
            continue
    raise NarmaDivergenceError(f"no stable series in {max_attempts} attempts")


def ridge_fit(features: np.ndarray, targets: Sequence[float],
              lam: float = RIDGE_LAMBDA) -> ReadoutWeights:
    """Closed-form ridge regression; rows are time steps."""
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[0] < x.shape[1]:
        raise ValueError("feature matrix needs rows >= columns")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and targets disagree on row count")
    gram = x.T @ x + lam * np.eye(x.shape[1])
    w = np.linalg.solve(gram, x.T @ y)
    return ReadoutWeights(w_out=tuple(float(v) for v in w))


def nrmse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Root mean squared error over the population std of the targets."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape or len(t) < 2:
        raise ValueError("need equal-length series of at least 2 samples")
    std = float(np.std(t))
    if std == 0.0:
        raise ValueError("targets are constant; NRMSE undefined")
    return float(np.sqrt(np.mean((p - t) ** 2)) / std)


def coefficient_of_variation(timings: Sequence[float]) -> float:
    """Sample (n-1) standard deviation over the mean."""
    t = np.asarray(timings, dtype=float)
    if len(t) < 2:
        raise ValueError("need at least 2 samples")
    mean = float(np.mean(t))
    if mean <= 0.0:
        raise ValueError("mean must be > 0")
    return float(np.std(t, ddof=1) / mean)


def window_entropy(timings: Sequence[float], bins: int = 16) -> float:
    """Shannon entropy of a fixed-width histogram, normalized to [0, 1]."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    t = np.asarray(timings, dtype=float)
    if len(t) == 0:
        raise ValueError("empty window")
    if float(np.min(t)) == float(np.max(t)):
        return 0.0
    counts, _ = np.histogram(t, bins=bins, range=(float(np.min(t)), float(np.max(t))))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum() / math.log2(bins))


REGIME_SYNC = "SYNC"
REGIME_UNCLASSIFIED = "UNCLASSIFIED"
REGIME_OPTIMAL = "OPTIMAL"
REGIME_OVERCLOCK = "OVERCLOCK-like"
REGIME_POISSON = "POISSON"


def classify_regime(cv: float) -> str:
    if cv < 0:
        raise ValueError("cv must be >= 0")
    if cv < 0.2:
        return REGIME_SYNC
    if cv < 0.4:
        return REGIME_UNCLASSIFIED
    if cv < 0.65:
        return REGIME_OPTIMAL
    if cv < 0.9:
        return REGIME_OVERCLOCK
    return REGIME_POISSON


@dataclass(frozen=True)
class SweepRow:
    voltage: float
    frequency: float
    difficulty: float
    entropy: float
    cv: float
    regime: str


def _cell_timings(profile: DeviceProfile, difficulty: float, samples: int,
                  seed: int) -> list[float]:
    twin = DigitalTwin(profile)
    records = run_session(twin, ChannelConfig(), samples, difficulty, seed=seed)
    return [float(r.delta_t) for r in records]


def vfd_sweep(cfg: SweepConfig, template: DeviceProfile,
              seed: int = 0) -> list[SweepRow]:
    """One fresh seeded session per (voltage, frequency, difficulty) cell."""
    rows = []
    for i, v in enumerate(cfg.voltages):
        for j, f in enumerate(cfg.frequencies):
            for k, d in enumerate(cfg.difficulties):
                profile = replace(template, voltage=v, frequency=f)
                cell_seed = seed * 1_000_003 + i * 10_007 + j * 101 + k
                timings = _cell_timings(profile, d, cfg.samples_per_cell, cell_seed)
                cv = coefficient_of_variation(timings)
                rows.append(SweepRow(
                    voltage=v, frequency=f, difficulty=d,
                    entropy=window_entropy(timings), cv=cv,
                    regime=classify_regime(cv),
                ))
    return rows


SWEEP_HEADER = "voltage,frequency,difficulty,entropy,cv,regime"


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(f"{r.voltage:g},{r.frequency:g},{r.difficulty:g},"
                     f"{r.entropy:.6f},{r.cv:.6f},{r.regime}")
    return "\n".join(lines) + "\n"


def calibrate_jitter_for_cv(profile: DeviceProfile, target_cv: float,
                            difficulty: float = 16.0, pilot_samples: int = 400,
                            iterations: int = 4, seed: int = 0) -> DeviceProfile:
    """Tune jitter_sigma so session timings hit a target CV.

    Clamping at 1 ns truncates the left tail, so the naive sigma guess
    undershoots; a few measure-and-rescale passes converge instead.
    """
    if target_cv <= 0:
        raise ValueError("target_cv must be > 0")
    timings = _cell_timings(profile, difficulty, pilot_samples, seed)
    sigma = max(profile.jitter_sigma, 1e-9)
    for step in range(iterations):
        trial = replace(profile, jitter_sigma=sigma)
        timings = _cell_timings(trial, difficulty, pilot_samples, seed + step + 1)
        measured = coefficient_of_variation(timings)
        if measured <= 0:
            sigma *= 2.0
            continue
        sigma *= target_cv / measured
    return replace(profile, jitter_sigma=sigma)


def _session_features(records: Sequence[HandshakeRecord],
                      series: NarmaSeries) -> tuple[np.ndarray, np.ndarray]:
    deltas = np.array([r.delta_t for r in records], dtype=float)
    temps = np.array([r.temperature for r in records], dtype=float)
    deltas = (deltas - deltas.mean()) / (deltas.std() or 1.0)
    temps = (temps - temps.mean()) / (temps.std() or 1.0)
    start = max(series.warmup, FEATURE_WINDOW)
    rows, targets = [], []
    for t in range(start, len(records)):
        rows.append([*deltas[t - FEATURE_WINDOW + 1:t + 1], temps[t], 1.0])
        targets.append(series.y[t])
    return np.array(rows), np.array(targets)


def run_narma_benchmark(mode: str, twin: DigitalTwin, channel: ChannelConfig,
                        series: NarmaSeries, *, seed: int = 0,
                        pipeline_depth: int = 8) -> tuple[float, float]:
    """Returns (nrmse, improvement) with improvement = 1 - nrmse."""
    if mode not in ("dialogue", "monologue", "constant"):
        raise ValueError(f"unknown mode {mode!r}")

    n = len(series.u)
    # strided holdout: every third row is held out, so the slow wander of
    # the NARMA target cannot open a train/test mean gap
    if mode == "constant":
        start = max(series.warmup, FEATURE_WINDOW)
        targets = np.array(series.y[start:])
        test = targets[np.arange(len(targets)) % 3 == 0]
        score = nrmse(np.full(len(test), test.mean()), test)
        return score, 1.0 - score

    depth = 1 if mode == "dialogue" else pipeline_depth
    drives = [v / 0.5 for v in series.u]
    records = run_session(twin, channel, n, 16.0, pipeline_depth=depth,
                          seed=seed, drives=drives)
    features, targets = _session_features(records, series)
    idx = np.arange(len(targets))
    train, test = idx % 3 != 0, idx % 3 == 0
    weights = ridge_fit(features[train], targets[train])
    score = nrmse(weights.predict(features[test]), targets[test])
    return score, 1.0 - score
