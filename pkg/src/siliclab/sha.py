"""Bit-exact SHA-256 with per-round traces, block headers and share targets.

The compression function is instrumented: every call can return the eight
working variables a..h after each of the 64 rounds plus the message
schedule, which downstream code mines for early-round statistics.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

_K = (
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1,
    0x923F82A4, 0xAB1C5ED5, 0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174, 0xE49B69C1, 0xEFBE4786,
    0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147,
    0x06CA6351, 0x14292967, 0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85, 0xA2BFE8A1, 0xA81A664B,
    0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A,
    0x5B9CCA4F, 0x682E6FF3, 0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
)

IV = (
    0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
    0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
)

_MASK = 0xFFFFFFFF

# share difficulty 1 corresponds to the compact target 0x1d00ffff
DIFF1_TARGET = 0xFFFF << 208


class HashInputError(ValueError):
    """Raised for malformed hashing inputs."""


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & _MASK


@dataclass(frozen=True)
class RoundTrace:
    """Working variables a..h after each of the 64 compression rounds."""

    rounds: tuple[tuple[int, ...], ...]  # one (a..h) entry per executed round
    schedule: tuple[int, ...]            # w[0..63]; partial traces carry a prefix

    def working_var(self, round_index: int, var: str = "a") -> int:
        """1-based round index; var is one of 'a'..'h'."""
        return self.rounds[round_index - 1]["abcdefgh".index(var)]


def compress_with_trace(block: bytes, state: tuple[int, ...],
                        rounds: int = 64) -> tuple[tuple[int, ...], RoundTrace]:
    """One SHA-256 compression over a 64-byte block, recording every round.

    ``rounds`` < 64 stops early and returns the partial trace with the
    (unfolded) working state; callers use this for early-abort simulation.
    """
    if len(block) != 64:
        raise HashInputError(f"block must be 64 bytes, got {len(block)}")
    if len(state) != 8:
        raise HashInputError("state must be 8 words")
    if not 1 <= rounds <= 64:
        raise HashInputError("rounds must be in 1..64")

    w = list(struct.unpack(">16I", block))
    for i in range(16, max(rounds, 16)):
        s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
        s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
        w.append((w[i - 16] + s0 + w[i - 7] + s1) & _MASK)

    a, b, c, d, e, f, g, h = state
    trace_rounds = []
    for i in range(rounds):
        s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
        ch = (e & f) ^ (~e & g)
        t1 = (h + s1 + ch + _K[i] + w[i]) & _MASK
        s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
        maj = (a & b) ^ (a & c) ^ (b & c)
        t2 = (s0 + maj) & _MASK
        h, g, f, e, d, c, b, a = g, f, e, (d + t1) & _MASK, c, b, a, (t1 + t2) & _MASK
        trace_rounds.append((a, b, c, d, e, f, g, h))

    digest_state = tuple((s + v) & _MASK for s, v in zip(state, (a, b, c, d, e, f, g, h)))
    return digest_state, RoundTrace(tuple(trace_rounds), tuple(w))


def _pad(message: bytes) -> bytes:
    length = len(message)
    padded = message + b"\x80" + b"\x00" * ((55 - length) % 64)
    return padded + struct.pack(">Q", length * 8)


def sha256_with_trace(message_block: bytes,
                      initial_hash: tuple[int, ...] = IV) -> tuple[bytes, RoundTrace]:
    """Digest of a single 64-byte block plus the full 64-round trace."""
    state, trace = compress_with_trace(message_block, initial_hash)
    return struct.pack(">8I", *state), trace


def sha256(message: bytes) -> bytes:
    """Plain SHA-256 over an arbitrary-length message."""
    state = IV
    padded = _pad(message)
    for off in range(0, len(padded), 64):
        state, _ = compress_with_trace(padded[off:off + 64], state)
    return struct.pack(">8I", *state)


@dataclass(frozen=True)
class BlockHeader:
    """An 80-byte mining block header in the standard field layout."""

    version: int
    prev_hash: bytes
    merkle_root: bytes
    time: int
    bits: int
    nonce: int

    def __post_init__(self):
        if len(self.prev_hash) != 32 or len(self.merkle_root) != 32:
            raise HashInputError("prev_hash and merkle_root must be 32 bytes")

    def serialize(self) -> bytes:
        raw = struct.pack(
            "<I32s32sIII",
            self.version & _MASK, self.prev_hash, self.merkle_root,
            self.time & _MASK, self.bits & _MASK, self.nonce & _MASK,
        )
        assert len(raw) == 80
        return raw

    def with_nonce(self, nonce: int) -> "BlockHeader":
        return BlockHeader(self.version, self.prev_hash, self.merkle_root,
                           self.time, self.bits, nonce)


def double_sha_header(header: BlockHeader) -> bytes:
    """SHA-256(SHA-256(80-byte serialization))."""
    return sha256(sha256(header.serialize()))


def header_first_block_trace(header: BlockHeader, rounds: int = 64) -> RoundTrace:
    """Trace of the first compression of the header's first 64-byte block."""
    _, trace = compress_with_trace(header.serialize()[:64], IV, rounds=rounds)
    return trace


def share_target(difficulty: float) -> int:
    """256-bit share threshold: floor(diff1_target / difficulty)."""
    if difficulty < 1:
        raise HashInputError(f"difficulty must be >= 1, got {difficulty}")
    return int(DIFF1_TARGET / Fraction(difficulty))


def meets_target(hash_bytes: bytes, difficulty: float) -> bool:
    """True when the hash (big-endian integer) is below the share target."""
    if len(hash_bytes) != 32:
        raise HashInputError("hash must be 32 bytes")
    return int.from_bytes(hash_bytes, "big") < share_target(difficulty)


def meets_target_value(hash_value: int, difficulty: float) -> bool:
    """Variant on the integer value, for simulated share hashes."""
    return hash_value < share_target(difficulty)
