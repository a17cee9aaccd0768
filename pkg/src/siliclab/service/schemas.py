"""Pydantic request/response models for the experiment service.

Each experiment endpoint takes a fully seeded request and returns both a
structured summary and the machine-readable result table, so callers can
persist the table verbatim.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from ..swh import ChannelConfig
from ..twin import DeviceProfile


class StrictModel(BaseModel):
    # unknown keys are config mistakes, not extensions
    model_config = ConfigDict(extra="forbid")


class ProfileSpec(StrictModel):
    device_id: str = "dev-0"
    voltage: float = 7.6
    frequency: float = 300.0
    base_round_time: float = 100.0
    temp_coefficient: float = 0.002
    ambient_t0: float = 25.0
    thermal_gain: float = 30.0
    thermal_decay: float = 0.15
    jitter_sigma: float = 5.0
    leak_mode: str = "null"
    leak_gain: float = 0.0
    leak_round: int = 5
    variation_scale: float = 0.02

    def to_profile(self) -> DeviceProfile:
        return DeviceProfile(**self.model_dump())

    @classmethod
    def from_profile(cls, profile: DeviceProfile) -> "ProfileSpec":
        return cls(**{name: getattr(profile, name) for name in cls.model_fields})


class ChannelSpec(StrictModel):
    one_way_latency_mean: float = 0.0
    latency_jitter_sigma: float = 0.0
    loss_probability: float = 0.0
    retransmit_timeout: float = 1_000_000.0

    def to_channel(self) -> ChannelConfig:
        return ChannelConfig(**self.model_dump())


def narma_profile_spec() -> ProfileSpec:
    """Memory-enabled leaky twin used for the reservoir benchmark."""
    return ProfileSpec(device_id="narma-0", thermal_gain=30.0, thermal_decay=0.15,
                       jitter_sigma=5.0, leak_mode="leaky", leak_gain=50.0)


def tpf_profile_spec(leak_mode: str = "leaky") -> ProfileSpec:
    """Low-noise profile where the round-5 leak dominates the timing."""
    gain = 800.0 if leak_mode == "leaky" else 0.0
    return ProfileSpec(device_id=f"tpf-{leak_mode}-0", temp_coefficient=0.0005,
                       thermal_gain=0.0, thermal_decay=0.1, jitter_sigma=2.0,
                       leak_mode=leak_mode, leak_gain=gain)


def puf_profile_spec(device_id: str) -> ProfileSpec:
    """High-jitter profile: authentication must survive realistic noise."""
    return ProfileSpec(device_id=device_id, thermal_gain=10.0, thermal_decay=0.1,
                       jitter_sigma=100.0)


class SelftestRequest(StrictModel):
    seed: int = 0
    n_joints: int = Field(default=1000, ge=1, le=100_000)


class CheckResultModel(StrictModel):
    name: str
    passed: bool
    detail: str


class SelftestResponse(StrictModel):
    passed: bool
    checks: list[CheckResultModel]
    csv: str


class SweepRequest(StrictModel):
    seed: int = 0
    profile: ProfileSpec = Field(default_factory=narma_profile_spec)
    voltages: list[float] = [6.0, 7.6, 9.0]
    frequencies: list[float] = [200.0, 300.0, 450.0]
    difficulties: list[float] = [4.0, 16.0]
    samples_per_cell: int = Field(default=300, ge=2)
    window_seconds: float = 2.0


class SweepResponse(StrictModel):
    rows: int
    csv: str


class NarmaRequest(StrictModel):
    seed: int = 0
    length: int = Field(default=3000, ge=100)
    modes: list[str] = ["dialogue", "monologue", "constant"]
    pipeline_depth: int = Field(default=8, ge=1)
    profile: ProfileSpec = Field(default_factory=narma_profile_spec)
    channel: ChannelSpec = Field(default_factory=ChannelSpec)


class NarmaResult(StrictModel):
    mode: str
    nrmse: float
    improvement: float


class NarmaResponse(StrictModel):
    results: list[NarmaResult]
    csv: str


class TpfRequest(StrictModel):
    seed: int = 0
    profile: ProfileSpec = Field(default_factory=tpf_profile_spec)
    n_train: int = Field(default=4000, ge=100)
    n_eval: int = Field(default=2000, ge=1)
    decision_round: int = Field(default=5, ge=1, le=63)
    difficulty: float = Field(default=64.0, gt=0)
    full_execution_rate: float = Field(default=0.05, gt=0, le=1.0)


class TpfResponse(StrictModel):
    metrics: dict
    no_signal: bool
    report: str


class VbmRequest(StrictModel):
    seed: int = 0
    t_hash: int = 4000
    t_network: int = 800
    t_stratum: int = 200
    duration: int = 100_000_000
    buffer_depth: int = 2
    network_jitter_sigma: float = 0.0


class VbmResponse(StrictModel):
    serial_efficiency: float
    vbm_efficiency: float
    throughput_gain: float
    csv: str


class PufRequest(StrictModel):
    seed: int = 0
    device: ProfileSpec = Field(default_factory=lambda: puf_profile_spec("puf-a"))
    impostor: ProfileSpec = Field(default_factory=lambda: puf_profile_spec("puf-b"))
    challenges: list[float] = [0.2, 0.6, 1.0]
    samples_per_challenge: int = Field(default=400, ge=100)
    n_trials: int = Field(default=20, ge=1)
    threshold: float = Field(default=0.15, gt=0, lt=1)


class PufWitness(StrictModel):
    challenge: float
    bucket: int
    gap: float


class PufResponse(StrictModel):
    trials: int
    accepts: int
    rejects: int
    witness: Optional[PufWitness]
    csv: str
