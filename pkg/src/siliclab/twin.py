"""Parametric thermodynamic timing model of a SHA-256 mining device.

The twin computes real per-round SHA-256 state for each job and layers a
controllable timing model on top: round time scales with frequency and
temperature, jitter is counter-based and device-seeded, and a ``leaky``
mode couples both the timing and the share outcome to an early-round
statistic of the hash state.  ``null`` mode keeps the share outcome
independent of everything observable, so leakage-detection pipelines can
be tested in both directions.

Share convention: the device returns difficulty-1 shares.  A simulated
share carries a hash value uniform below the difficulty-1 target, so
acceptance at pool difficulty D has probability exactly 1/D.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .sha import (
    DIFF1_TARGET,
    BlockHeader,
    RoundTrace,
    compress_with_trace,
    IV,
    meets_target_value,
)


def _digest(data: bytes) -> bytes:
    # internal plumbing hash (RNG keys, block synthesis); not the traced path
    return hashlib.sha256(data).digest()

REFERENCE_FREQ_MHZ = 600.0

# Exact Binomial(32, 1/2) CDF table for the popcount PIT in leaky mode.
_BINOM_PMF = tuple(comb(32, i) / 2**32 for i in range(33))
_BINOM_CDF_BELOW = tuple(sum(_BINOM_PMF[:i]) for i in range(33))


class ProfileError(ValueError):
    """Raised for invalid device profile parameters or files."""


@dataclass(frozen=True)
class DeviceProfile:
    """Physical parameters of one simulated device."""

    device_id: str
    voltage: float              # volts
    frequency: float            # MHz
    base_round_time: float      # ns per round at the reference frequency
    temp_coefficient: float     # fraction per degC
    ambient_t0: float           # degC
    thermal_gain: float         # degC per unit load
    thermal_decay: float        # per-job fraction in (0, 1]; 1 erases all memory
    jitter_sigma: float         # ns
    leak_mode: str = "null"     # "null" or "leaky"
    leak_gain: float = 0.0      # ns per unit early-round statistic
    leak_round: int = 5         # round index feeding the leak statistic
    variation_scale: float = 0.02  # device-id-derived round-time spread

    def __post_init__(self):
        if self.base_round_time <= 0:
            raise ProfileError("base_round_time must be > 0")
        if not 0 < self.thermal_decay <= 1:
            raise ProfileError("thermal_decay must be in (0, 1]")
        if self.jitter_sigma < 0:
            raise ProfileError("jitter_sigma must be >= 0")
        if self.leak_mode not in ("null", "leaky"):
            raise ProfileError(f"unknown leak_mode {self.leak_mode!r}")
        if not 1 <= self.leak_round <= 64:
            raise ProfileError("leak_round must be in 1..64")

    @property
    def round_time(self) -> float:
        """Effective ns per round: frequency scaling plus device variation."""
        base = self.base_round_time * (REFERENCE_FREQ_MHZ / self.frequency)
        return base * (1.0 + self.variation_scale * self.device_unit)

    @property
    def device_unit(self) -> float:
        """Deterministic manufacturing-variation coordinate in [-1, 1]."""
        digest = _digest(b"device-variation:" + self.device_id.encode())
        return int.from_bytes(digest[:8], "big") / 2**63 - 1.0


@dataclass(frozen=True)
class ThermalState:
    """History-dependent device state: the physically realized reservoir."""

    temperature: float            # degC
    history_accumulator: float    # dimensionless fading-memory trace

    @classmethod
    def ambient(cls, profile: DeviceProfile) -> "ThermalState":
        return cls(temperature=profile.ambient_t0, history_accumulator=0.0)


@dataclass(frozen=True)
class TimingSample:
    extranonce2: bytes
    delta_t: float        # ns
    difficulty: float
    temperature: float    # degC

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ProfileError("delta_t must be positive")


@dataclass(frozen=True)
class Job:
    """One unit of work sent to the twin."""

    extranonce2: bytes
    drive: float = 1.0            # normalized heat drive in [0, 1]
    header: Optional[BlockHeader] = None


@dataclass(frozen=True)
class JobResult:
    sample: TimingSample
    state: ThermalState
    success: bool
    hash_value: int               # simulated share value, uniform below diff-1
    leak_statistic: float


def _job_rng(profile: DeviceProfile, extranonce2: bytes) -> np.random.Generator:
    # Counter-based: the stream is a pure function of (device_id, extranonce2).
    digest = _digest(profile.device_id.encode() + b"|" + extranonce2)
    key = int.from_bytes(digest[:16], "big")
    return np.random.Generator(np.random.Philox(key=key))


@lru_cache(maxsize=8192)
def _job_trace(job: Job, rounds: int) -> RoundTrace:
    if job.header is not None:
        block = job.header.serialize()[:64]
    else:
        # synthesize a job-specific block from the extranonce2 payload
        block = _digest(b"job-block:" + job.extranonce2) + _digest(b"job-block2:" + job.extranonce2)
    _, trace = compress_with_trace(block, IV, rounds=rounds)
    return trace


def leak_statistic(trace: RoundTrace, round_index: int) -> float:
    """Population count of round-k working variable ``a`` minus 16, in [-1, 1]."""
    a = trace.working_var(round_index, "a")
    return (bin(a).count("1") - 16) / 16.0


def simulate_timing(profile: DeviceProfile, state: ThermalState, job: Job,
                    rounds_executed: int) -> tuple[TimingSample, ThermalState]:
    """Timing of one job plus the thermal state after it.

    delta_t uses the pre-update temperature; the state then absorbs the
    job's heat load and decays toward ambient by the per-job fraction.
    """
    if not 1 <= rounds_executed <= 128:
        raise ProfileError("rounds_executed must be in 1..128")

    rng = _job_rng(profile, job.extranonce2)
    jitter = profile.jitter_sigma * rng.standard_normal()

    delta_t = rounds_executed * profile.round_time * (
        1.0 + profile.temp_coefficient * (state.temperature - profile.ambient_t0)
    ) + jitter

    if profile.leak_mode == "leaky" and profile.leak_gain != 0.0:
        trace = _job_trace(job, profile.leak_round)
        delta_t += profile.leak_gain * leak_statistic(trace, profile.leak_round)

    delta_t = max(delta_t, 1.0)

    load = job.drive * rounds_executed / 64.0
    keep = 1.0 - profile.thermal_decay
    new_state = ThermalState(
        temperature=profile.ambient_t0
        + (state.temperature - profile.ambient_t0 + profile.thermal_gain * load) * keep,
        history_accumulator=(state.history_accumulator + load) * keep,
    )
    sample = TimingSample(job.extranonce2, delta_t, difficulty=1.0,
                          temperature=state.temperature)
    return sample, new_state


def idle_step(profile: DeviceProfile, state: ThermalState) -> ThermalState:
    keep = 1.0 - profile.thermal_decay
    return ThermalState(
        temperature=profile.ambient_t0 + (state.temperature - profile.ambient_t0) * keep,
        history_accumulator=state.history_accumulator * keep,
    )


def share_hash_value(profile: DeviceProfile, job: Job) -> tuple[int, float]:
    """Simulated share value (uniform below the diff-1 target) and leak statistic.

    In leaky mode the value is the randomized probability integral transform
    of the round-k popcount, so low share values (successes at high
    difficulty) coincide with high popcounts while the marginal law stays
    exactly uniform.  In null mode the value is an independent uniform.
    """
    rng = _job_rng(profile, b"share|" + job.extranonce2)
    u = rng.random()
    if profile.leak_mode == "leaky":
        trace = _job_trace(job, profile.leak_round)
        stat = leak_statistic(trace, profile.leak_round)
        pc = trace.working_var(profile.leak_round, "a")
        pc = bin(pc).count("1")
        grade = _BINOM_CDF_BELOW[pc] + u * _BINOM_PMF[pc]
        value = int((1.0 - grade) * DIFF1_TARGET)
    else:
        stat = 0.0
        value = int(u * DIFF1_TARGET)
    return min(value, DIFF1_TARGET - 1), stat


class DigitalTwin:
    """Stateful wrapper: one simulated device with its evolving thermal state."""

    def __init__(self, profile: DeviceProfile,
                 state: Optional[ThermalState] = None):
        self.profile = profile
        self.state = state if state is not None else ThermalState.ambient(profile)

    def probe_timing(self, job: Job, rounds: int) -> TimingSample:
        """Timing for the first ``rounds`` rounds without committing the state."""
        sample, _ = simulate_timing(self.profile, self.state, job, rounds)
        return sample

    def execute_job(self, job: Job, difficulty: float = 1.0,
                    rounds_executed: int = 64) -> JobResult:
        sample, new_state = simulate_timing(self.profile, self.state, job, rounds_executed)
        self.state = new_state
        value, stat = share_hash_value(self.profile, job)
        success = meets_target_value(value, difficulty)
        sample = replace(sample, difficulty=difficulty)
        return JobResult(sample=sample, state=new_state, success=success,
                         hash_value=value, leak_statistic=stat)

    def idle(self, steps: int = 1):
        for _ in range(steps):
            self.state = idle_step(self.profile, self.state)


def early_round_features(trace: RoundTrace, timing: TimingSample,
                         profile: DeviceProfile, k: int) -> tuple[float, float, float]:
    """Raw 3-vector (per-round timing, temperature, voltage) for rounds 1..k.

    Standardization by the training scaler is applied downstream by the
    classifier pipeline.
    """
    if not 1 <= k <= 64:
        raise ProfileError("k must be in 1..64")
    if len(trace.rounds) < k:
        raise ProfileError(f"trace covers {len(trace.rounds)} rounds, need {k}")
    return (timing.delta_t / k, timing.temperature, profile.voltage)


@dataclass(frozen=True)
class SuccessEstimate:
    probability: Optional[float]
    stderr: Optional[float]
    samples: int

    @property
    def no_data(self) -> bool:
        return self.samples == 0


def conditional_success_estimate(profile: DeviceProfile,
                                 bucket: Callable[[float], bool],
                                 difficulty: float,
                                 sample_budget: int,
                                 seed: int = 0) -> SuccessEstimate:
    """Monte Carlo estimate of P(share success | early-state bucket).

    ``bucket`` is a predicate over the early-round leak statistic; jobs
    outside the bucket are discarded from the estimate.
    """
    if sample_budget < 1000:
        raise ProfileError("sample_budget must be >= 1000")
    twin = DigitalTwin(profile)
    hits = 0
    n = 0
    for i in range(sample_budget):
        job = Job(extranonce2=f"cse-{seed}-{i}".encode())
        trace = _job_trace(job, profile.leak_round)
        stat = leak_statistic(trace, profile.leak_round)
        if not bucket(stat):
            continue
        result = twin.execute_job(job, difficulty=difficulty, rounds_executed=64)
        n += 1
        hits += int(result.success)
    if n == 0:
        return SuccessEstimate(None, None, 0)
    p = hits / n
    stderr = math.sqrt(max(p * (1 - p), 1e-12) / n)
    return SuccessEstimate(p, stderr, n)


PRESETS = {
    # Table-style platform parameterizations; round times reflect the
    # hashrate orders of magnitude, not cycle-accurate silicon.
    "s9": DeviceProfile(
        device_id="s9-0", voltage=8.0, frequency=525.0, base_round_time=50.0,
        temp_coefficient=0.002, ambient_t0=25.0, thermal_gain=40.0,
        thermal_decay=0.05, jitter_sigma=20.0,
    ),
    "lv06": DeviceProfile(
        device_id="lv06-0", voltage=5.0, frequency=400.0, base_round_time=1400.0,
        temp_coefficient=0.002, ambient_t0=25.0, thermal_gain=30.0,
        thermal_decay=0.08, jitter_sigma=400.0,
    ),
    "lbbox": DeviceProfile(
        device_id="lbbox-0", voltage=6.0, frequency=300.0, base_round_time=4000.0,
        temp_coefficient=0.002, ambient_t0=25.0, thermal_gain=35.0,
        thermal_decay=0.06, jitter_sigma=900.0,
    ),
}

_FIELD_TYPES = {
    "device_id": str, "leak_mode": str,
    "leak_round": int,
    "voltage": float, "frequency": float, "base_round_time": float,
    "temp_coefficient": float, "ambient_t0": float, "thermal_gain": float,
    "thermal_decay": float, "jitter_sigma": float, "leak_gain": float,
    "variation_scale": float,
}


def profile_to_text(profile: DeviceProfile) -> str:
    lines = [f"{name}={getattr(profile, name)}" for name in _FIELD_TYPES]
    return "\n".join(lines) + "\n"


def profile_from_text(text: str) -> DeviceProfile:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ProfileError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ProfileError(f"line {lineno}: unknown key {key!r}")
        values[key] = _FIELD_TYPES[key](raw.strip())
    return DeviceProfile(**values)


def load_profile(name_or_path: str) -> DeviceProfile:
    """Resolve a preset name (s9, lv06, lbbox) or a key=value file path."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]
    path = Path(name_or_path)
    if not path.exists():
        raise ProfileError(f"no preset or profile file named {name_or_path!r}")
    return profile_from_text(path.read_text())
