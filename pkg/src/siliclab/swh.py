"""Single-Word Handshake protocol stack.

One controller, one simulated device, a lossy/laggy channel, and a single
logical integer-nanosecond clock.  The blocking handshake keeps exactly
one job outstanding; the pipelined "monologue" baseline dispatches jobs
in batches and measures each response from its batch dispatch time,
deliberately reintroducing the timing ambiguity the handshake removes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .sha import BlockHeader
from .twin import DigitalTwin, Job

MAX_RETRIES = 20


class DecodeError(ValueError):
    """Malformed wire frame; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class SessionError(RuntimeError):
    """Device unresponsive beyond the retry budget; carries partial records."""

    def __init__(self, message: str, records: list["HandshakeRecord"]):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class JobMessage:
    job_id: str
    extranonce2: bytes
    header_template: BlockHeader   # nonce field ignored
    difficulty: float


@dataclass(frozen=True)
class ShareMessage:
    job_id: str
    extranonce2: bytes
    nonce: int
    hash: bytes


@dataclass(frozen=True)
class HandshakeRecord:
    extranonce2: bytes
    t_send: int        # ns
    t_recv: int        # ns
    delta_t: int       # ns
    difficulty: float
    temperature: float

    def __post_init__(self):
        if self.t_recv <= self.t_send:
            raise ValueError("t_recv must follow t_send")
        if self.delta_t != self.t_recv - self.t_send:
            raise ValueError("delta_t must equal t_recv - t_send")


@dataclass(frozen=True)
class ChannelConfig:
    one_way_latency_mean: float = 0.0    # ns
    latency_jitter_sigma: float = 0.0    # ns
    loss_probability: float = 0.0
    retransmit_timeout: float = 1_000_000.0  # ns

    def __post_init__(self):
        if not 0.0 <= self.loss_probability < 1.0:
            raise ValueError("loss_probability must be in [0, 1)")
        if self.retransmit_timeout <= 0:
            raise ValueError("retransmit_timeout must be > 0")


def encode_drive(counter: int, drive: float) -> bytes:
    """Pack a job counter and a [0, 1] drive value into an extranonce2."""
    return struct.pack(">If", counter & 0xFFFFFFFF, drive)


def decode_drive(extranonce2: bytes) -> float:
    _, drive = struct.unpack(">If", extranonce2)
    return drive


def _frame(kind: str, fields: Sequence[str]) -> bytes:
    body = "\n".join([kind, *fields]) + "\n"
    raw = body.encode()
    return f"{len(raw)}\n".encode() + raw


def _unframe(data: bytes, expect_kind: str) -> list[str]:
    newline = data.find(b"\n")
    if newline < 0:
        raise DecodeError("missing length prefix", 0)
    try:
        length = int(data[:newline])
    except ValueError:
        raise DecodeError("bad length prefix", 0)
    body = data[newline + 1:]
    if len(body) != length:
        raise DecodeError(f"frame body is {len(body)} bytes, declared {length}",
                          newline + 1 + min(len(body), length))
    lines = body.decode().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != expect_kind:
        raise DecodeError(f"expected {expect_kind} frame", newline + 1)
    return lines[1:]


def encode_job(msg: JobMessage) -> bytes:
    h = msg.header_template
    return _frame("job", [
        msg.job_id,
        msg.extranonce2.hex(),
        repr(msg.difficulty),
        str(h.version),
        h.prev_hash.hex(),
        h.merkle_root.hex(),
        str(h.time),
        str(h.bits),
    ])


def decode_job(data: bytes) -> JobMessage:
    fields = _unframe(data, "job")
    if len(fields) != 8:
        raise DecodeError(f"job frame has {len(fields)} fields, expected 8", 0)
    job_id, e2, diff, version, prev, merkle, time_, bits = fields
    try:
        header = BlockHeader(int(version), bytes.fromhex(prev),
                             bytes.fromhex(merkle), int(time_), int(bits), 0)
        return JobMessage(job_id, bytes.fromhex(e2), header, float(diff))
    except (ValueError, TypeError) as exc:
        raise DecodeError(f"bad job field: {exc}", 0)


def encode_share(msg: ShareMessage) -> bytes:
    return _frame("share", [msg.job_id, msg.extranonce2.hex(),
                            str(msg.nonce), msg.hash.hex()])


def decode_share(data: bytes) -> ShareMessage:
    fields = _unframe(data, "share")
    if len(fields) != 4:
        raise DecodeError(f"share frame has {len(fields)} fields, expected 4", 0)
    job_id, e2, nonce, hash_hex = fields
    try:
        return ShareMessage(job_id, bytes.fromhex(e2), int(nonce),
                            bytes.fromhex(hash_hex))
    except (ValueError, TypeError) as exc:
        raise DecodeError(f"bad share field: {exc}", 0)


def _session_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed ^ 0x5357485F43480000))


def run_session(twin: DigitalTwin, channel: ChannelConfig, n_jobs: int,
                difficulty: float, *, pipeline_depth: int = 1, seed: int = 0,
                drives: Optional[Sequence[float]] = None,
                max_retries: int = MAX_RETRIES,
                job_salt: int = 0) -> list[HandshakeRecord]:
    """Shared engine: pipeline depth 1 is the blocking handshake."""
    if n_jobs < 1:
        raise ValueError("n_jobs must be >= 1")
    if pipeline_depth < 1:
        raise ValueError("pipeline_depth must be >= 1")
    if drives is not None and len(drives) != n_jobs:
        raise ValueError("drives must have one entry per job")

    rng = _session_rng(seed)
    timeout = int(channel.retransmit_timeout)

    def latency() -> int:
        raw = rng.normal(channel.one_way_latency_mean, channel.latency_jitter_sigma)
        return max(0, int(raw))

    clock = 0
    device_free = 0
    records: list[HandshakeRecord] = []
    seen_recv: set[int] = set()
    compute_cache: dict[bytes, tuple[int, float]] = {}
    answered: set[bytes] = set()

    jobs = [Job(extranonce2=encode_drive(job_salt + i, drives[i] if drives else 1.0),
                drive=drives[i] if drives else 1.0)
            for i in range(n_jobs)]

    for start in range(0, n_jobs, pipeline_depth):
        batch = jobs[start:start + pipeline_depth]
        sends = []
        for _ in batch:
            sends.append(clock)
            clock += 1
        batch_recv_max = clock
        for job, t_send in zip(batch, sends):
            attempt_send = t_send
            for attempt in range(max_retries + 1):
                if attempt == max_retries:
                    raise SessionError(
                        f"job {job.extranonce2.hex()} exceeded {max_retries} retries",
                        records,
                    )
                lost = rng.random() < channel.loss_probability
                outbound_lost = lost and rng.random() < 0.5
                l_out, l_back = latency(), latency()

                if lost and outbound_lost:
                    attempt_send += timeout
                    continue

                arrival = attempt_send + l_out
                if job.extranonce2 in compute_cache:
                    # idempotent retransmit: cached response, no recompute
                    compute, temperature = compute_cache[job.extranonce2]
                    done = max(device_free, arrival) + 1
                else:
                    result = twin.execute_job(job, difficulty=difficulty)
                    compute = max(1, int(round(result.sample.delta_t)))
                    temperature = result.sample.temperature
                    compute_cache[job.extranonce2] = (compute, temperature)
                    done = max(device_free, arrival) + compute
                    device_free = done

                if lost:  # response lost in transit
                    attempt_send += timeout
                    continue

                t_recv = done + l_back
                if t_recv <= t_send:
                    t_recv = t_send + 1
                while t_recv in seen_recv:
                    t_recv += 1
                seen_recv.add(t_recv)

                if job.extranonce2 in answered:
                    break  # duplicate response discarded by id
                answered.add(job.extranonce2)
                records.append(HandshakeRecord(
                    extranonce2=job.extranonce2, t_send=t_send, t_recv=t_recv,
                    delta_t=t_recv - t_send, difficulty=difficulty,
                    temperature=temperature,
                ))
                batch_recv_max = max(batch_recv_max, t_recv)
                break
        clock = batch_recv_max + 1
    return records


def run_swh_session(twin: DigitalTwin, channel: ChannelConfig, n_jobs: int,
                    difficulty: float, *, seed: int = 0,
                    drives: Optional[Sequence[float]] = None,
                    max_retries: int = MAX_RETRIES,
                    job_salt: int = 0) -> list[HandshakeRecord]:
    """Blocking one-outstanding-job session."""
    return run_session(twin, channel, n_jobs, difficulty, pipeline_depth=1,
                       seed=seed, drives=drives, max_retries=max_retries,
                       job_salt=job_salt)


def run_monologue_session(twin: DigitalTwin, channel: ChannelConfig, n_jobs: int,
                          difficulty: float, *, depth: int = 4, seed: int = 0,
                          drives: Optional[Sequence[float]] = None,
                          max_retries: int = MAX_RETRIES) -> list[HandshakeRecord]:
    """Pipelined baseline; per-job timing measured from batch dispatch."""
    return run_session(twin, channel, n_jobs, difficulty, pipeline_depth=depth,
                       seed=seed, drives=drives, max_retries=max_retries)


LOG_HEADER = "extranonce2,t_send_ns,t_recv_ns,delta_t_ns,difficulty,temperature"


def records_to_log(records: Sequence[HandshakeRecord]) -> str:
    lines = [LOG_HEADER]
    for r in records:
        lines.append(f"{r.extranonce2.hex()},{r.t_send},{r.t_recv},"
                     f"{r.delta_t},{r.difficulty:g},{r.temperature:.6f}")
    return "\n".join(lines) + "\n"
