"""Virtual Block Manager: serial versus double-buffered mining loops.

A discrete-event model on an integer-nanosecond clock.  The serial loop
fetches a work template, processes it, then hashes; the VBM loop fetches
the next template while the current one is hashing, so the device never
waits on the network once the buffer is warm.  The hash time per unit is
identical in both modes: the gain is purely eliminated idle time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class VbmError(ValueError):
    """Raised for invalid loop parameters."""


@dataclass(frozen=True)
class LoopParams:
    t_hash: int             # ns per work unit
    t_network: int          # ns round-trip mean
    t_stratum: int          # ns template processing
    duration: int           # ns simulated
    buffer_depth: int = 2
    network_jitter_sigma: float = 0.0

    def __post_init__(self):
        if self.t_hash <= 0 or self.duration <= 0:
            raise VbmError("t_hash and duration must be > 0")
        if self.t_network < 0 or self.t_stratum < 0:
            raise VbmError("t_network and t_stratum must be >= 0")
        if self.buffer_depth < 1:
            raise VbmError("buffer_depth must be >= 1")
        if self.network_jitter_sigma < 0:
            raise VbmError("network_jitter_sigma must be >= 0")


@dataclass(frozen=True)
class MiningLoopStats:
    wall_time: int          # ns, end of the last completed unit
    busy_time: int          # ns spent hashing
    idle_time: int          # ns waiting on fetches
    work_units: int
    effective_rate: float   # units per second
    efficiency: float       # eta = busy / wall

    def __post_init__(self):
        if self.busy_time + self.idle_time != self.wall_time:
            raise VbmError("busy + idle must equal wall time")


def _fetch_times(params: LoopParams, seed: int, count: int) -> list[int]:
    rng = np.random.Generator(np.random.Philox(key=seed ^ 0x56424D5F66657463))
    times = []
    for _ in range(count):
        latency = params.t_network
        if params.network_jitter_sigma > 0:
            latency = max(0, int(rng.normal(params.t_network,
                                            params.network_jitter_sigma)))
        times.append(latency + params.t_stratum)
    return times


def _stats(units: int, wall: int, t_hash: int) -> MiningLoopStats:
    busy = units * t_hash
    wall = max(wall, busy)
    return MiningLoopStats(
        wall_time=wall, busy_time=busy, idle_time=wall - busy,
        work_units=units,
        effective_rate=units / wall * 1e9 if wall else 0.0,
        efficiency=busy / wall if wall else 0.0,
    )


def _upper_bound_units(params: LoopParams) -> int:
    return params.duration // params.t_hash + 2


def simulate_serial(params: LoopParams, seed: int = 0) -> MiningLoopStats:
    """Fetch, process, hash, repeat; nothing overlaps."""
    fetches = _fetch_times(params, seed, _upper_bound_units(params))
    clock = 0
    units = 0
    last_done = 0
    for fetch in fetches:
        done = clock + fetch + params.t_hash
        if done > params.duration:
            break
        clock = done
        last_done = done
        units += 1
    return _stats(units, last_done, params.t_hash)


def simulate_vbm(params: LoopParams, seed: int = 0) -> MiningLoopStats:
    """Prefetching loop: fetches overlap hashing through a small buffer."""
    if params.buffer_depth < 2:
        raise VbmError("VBM needs buffer_depth >= 2")
    fetches = _fetch_times(params, seed, _upper_bound_units(params))
    fetch_end: list[int] = []
    hash_end: list[int] = []
    units = 0
    last_done = 0
    for i, fetch in enumerate(fetches):
        start = fetch_end[i - 1] if i >= 1 else 0
        if i >= params.buffer_depth:
            # all buffer slots full until unit i-depth starts hashing
            start = max(start, hash_end[i - params.buffer_depth])
        fetch_end.append(start + fetch)
        done = max(hash_end[i - 1] if i >= 1 else 0, fetch_end[i]) + params.t_hash
        hash_end.append(done)
        if done > params.duration:
            break
        units += 1
        last_done = done
    return _stats(units, last_done, params.t_hash)


def combined_savings(tpf: float, vbm: float) -> float:
    """Multiplicative composition 1 - (1 - tpf)(1 - vbm)."""
    if not (0 <= tpf < 1 and 0 <= vbm < 1):
        raise VbmError("both savings must be in [0, 1)")
    return 1.0 - (1.0 - tpf) * (1.0 - vbm)


@dataclass(frozen=True)
class VbmComparison:
    params: LoopParams
    serial: MiningLoopStats
    vbm: MiningLoopStats

    @property
    def throughput_gain(self) -> float:
        if self.serial.effective_rate == 0:
            return 0.0
        return self.vbm.effective_rate / self.serial.effective_rate - 1.0


def run_vbm_comparison(params: LoopParams, seed: int = 0) -> VbmComparison:
    return VbmComparison(params=params,
                         serial=simulate_serial(params, seed),
                         vbm=simulate_vbm(params, seed))


_SCENARIO_FIELDS = {
    "t_hash": int, "t_network": int, "t_stratum": int, "duration": int,
    "buffer_depth": int, "network_jitter_sigma": float,
}


def scenario_to_text(params: LoopParams) -> str:
    return "".join(f"{name}={getattr(params, name)!r}\n"
                   for name in _SCENARIO_FIELDS)


def scenario_from_text(text: str) -> LoopParams:
    values = {}
    for lineno, line in enumerate(text.strip().split("\n"), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise VbmError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _SCENARIO_FIELDS:
            raise VbmError(f"line {lineno}: unknown key {key!r}")
        values[key] = _SCENARIO_FIELDS[key](raw.strip())
    return LoopParams(**values)


RESULTS_HEADER = "mode,t_hash,t_network,t_stratum,duration,buffer_depth,eta,gain"


def comparison_to_csv(comparisons: Sequence[VbmComparison]) -> str:
    lines = [RESULTS_HEADER]
    for c in comparisons:
        p = c.params
        base = f"{p.t_hash},{p.t_network},{p.t_stratum},{p.duration},{p.buffer_depth}"
        lines.append(f"serial,{base},{c.serial.efficiency:.6f},0.000000")
        lines.append(f"vbm,{base},{c.vbm.efficiency:.6f},{c.throughput_gain:.6f}")
    return "\n".join(lines) + "\n"
