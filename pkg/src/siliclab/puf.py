"""Silicon-signature authentication from handshake timing profiles.

A challenge is a drive level; a device answers it with the timing
distribution of a short session at that drive.  Manufacturing variation
shifts each device's round time, so the per-challenge distributions
separate devices while staying reproducible for the same one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .infotheory import FiniteDistribution, distinguishability_witness
from .swh import ChannelConfig, run_swh_session
from .twin import DeviceProfile, DigitalTwin

N_BINS = 16
MIN_SAMPLES = 100
DEFAULT_THRESHOLD = 0.15


class PufError(ValueError):
    """Raised for invalid authentication inputs."""


@dataclass(frozen=True)
class TimingProfile:
    challenges: tuple[float, ...]
    samples: tuple[tuple[int, ...], ...]   # delta_t ns per challenge
    voltage: float
    frequency: float
    ambient_t0: float
    n_bins: int = N_BINS

    def __post_init__(self):
        if len(self.challenges) != len(self.samples):
            raise PufError("one sample set per challenge required")
        if not self.challenges:
            raise PufError("at least one challenge required")
        if len(set(self.challenges)) != len(self.challenges):
            raise PufError("duplicate challenges")
        for ch, group in zip(self.challenges, self.samples):
            if len(group) < MIN_SAMPLES:
                raise PufError(
                    f"challenge {ch} has {len(group)} samples, need {MIN_SAMPLES}")
        if self.n_bins < 2:
            raise PufError("n_bins must be >= 2")

    def challenge_index(self, challenge: float) -> int:
        try:
            return self.challenges.index(challenge)
        except ValueError:
            raise PufError(f"unknown challenge {challenge}")

    def edges(self, challenge: float) -> tuple[int, int]:
        group = self.samples[self.challenge_index(challenge)]
        return min(group), max(group)


def bucketize(samples: Sequence[int], lo: int, hi: int,
              n_bins: int = N_BINS) -> FiniteDistribution:
    """Fixed-width histogram as a distribution over all bucket labels.

    Out-of-range values clamp into the edge buckets, so shifted response
    distributions remain visible as edge mass.
    """
    if len(samples) == 0:
        raise PufError("empty sample set")
    width = (hi - lo) / n_bins if hi > lo else 1.0
    counts = [0] * n_bins
    for v in samples:
        idx = int((v - lo) / width)
        counts[min(max(idx, 0), n_bins - 1)] += 1
    n = len(samples)
    return FiniteDistribution.from_pairs([(b, c / n) for b, c in enumerate(counts)])


def total_variation(p: FiniteDistribution, q: FiniteDistribution) -> float:
    if p.outcomes != q.outcomes:
        raise PufError("distributions must share the same buckets")
    return 0.5 * sum(abs(a - b) for a, b in zip(p.masses, q.masses))


@dataclass(frozen=True)
class AuthDecision:
    accept: bool
    statistic: float
    threshold: float
    challenge_gaps: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.accept != (self.statistic <= self.threshold):
            raise PufError("accept must equal statistic <= threshold")


def _collect(device: DeviceProfile, challenges: Sequence[float],
             samples_per_challenge: int, seed: int, tag: int) -> list[tuple[int, ...]]:
    groups = []
    for ci, drive in enumerate(challenges):
        if not 0.0 <= drive <= 1.0:
            raise PufError(f"challenge drive {drive} outside [0, 1]")
        twin = DigitalTwin(device)
        salt = ((seed * 2 + tag) * 1_000_003 + ci) << 20
        records = run_swh_session(
            twin, ChannelConfig(), samples_per_challenge, 1.0,
            seed=seed * 31 + ci, drives=[drive] * samples_per_challenge,
            job_salt=salt,
        )
        groups.append(tuple(r.delta_t for r in records))
    return groups


def enroll(device: DeviceProfile, challenges: Sequence[float],
           samples_per_challenge: int = 800, seed: int = 0) -> TimingProfile:
    """Controlled-conditions enrollment: one clean session per challenge."""
    if samples_per_challenge < MIN_SAMPLES:
        raise PufError(f"need at least {MIN_SAMPLES} samples per challenge")
    groups = _collect(device, challenges, samples_per_challenge, seed, tag=0)
    return TimingProfile(
        challenges=tuple(challenges), samples=tuple(groups),
        voltage=device.voltage, frequency=device.frequency,
        ambient_t0=device.ambient_t0,
    )


def respond(device: DeviceProfile, challenges: Sequence[float],
            samples_per_challenge: int = 800,
            seed: int = 0) -> dict[float, tuple[int, ...]]:
    """Fresh response samples for a verification round."""
    groups = _collect(device, challenges, samples_per_challenge, seed, tag=1)
    return dict(zip(challenges, groups))


def verify(profile: TimingProfile, responses: Mapping[float, Sequence[int]],
           threshold: float = DEFAULT_THRESHOLD) -> AuthDecision:
    """Max-over-challenges total variation against the enrolled profile."""
    gaps = []
    for challenge, enrolled in zip(profile.challenges, profile.samples):
        if challenge not in responses:
            raise PufError(f"responses missing challenge {challenge}")
        lo, hi = min(enrolled), max(enrolled)
        p = bucketize(enrolled, lo, hi, profile.n_bins)
        q = bucketize(responses[challenge], lo, hi, profile.n_bins)
        gaps.append((challenge, total_variation(p, q)))
    statistic = max(g for _, g in gaps)
    return AuthDecision(accept=statistic <= threshold, statistic=statistic,
                        threshold=threshold, challenge_gaps=tuple(gaps))


def distinguish(profile_a: TimingProfile, profile_b: TimingProfile,
                tol: float) -> Optional[tuple[float, int, float]]:
    """(challenge, bucket, gap) of the maximal separation above tol, if any.

    Both profiles are re-binned over the pooled range per challenge so the
    bucket labels are comparable; the per-bucket scan delegates to the
    information-theoretic witness.
    """
    shared = [c for c in profile_a.challenges if c in profile_b.challenges]
    if not shared:
        raise PufError("profiles share no challenges")
    best = None
    for challenge in shared:
        a = profile_a.samples[profile_a.challenge_index(challenge)]
        b = profile_b.samples[profile_b.challenge_index(challenge)]
        lo, hi = min(min(a), min(b)), max(max(a), max(b))
        pa = bucketize(a, lo, hi, profile_a.n_bins)
        pb = bucketize(b, lo, hi, profile_a.n_bins)
        witness = distinguishability_witness(pa, pb, tol)
        if witness is not None:
            bucket, gap = witness
            if best is None or gap > best[2]:
                best = (challenge, bucket, gap)
    return best


PROFILE_FORMAT = "puf-profile v1"


def profile_to_text(profile: TimingProfile) -> str:
    """One empirical-distribution section per challenge."""
    parts = [PROFILE_FORMAT,
             f"conditions voltage={profile.voltage!r} "
             f"frequency={profile.frequency!r} "
             f"ambient_t0={profile.ambient_t0!r} n_bins={profile.n_bins}"]
    for challenge, group in zip(profile.challenges, profile.samples):
        parts.append(f"challenge {challenge!r} samples={len(group)}")
        counts: dict[int, int] = {}
        for v in group:
            counts[v] = counts.get(v, 0) + 1
        n = len(group)
        dist = FiniteDistribution.from_pairs(
            [(v, c / n) for v, c in sorted(counts.items())])
        parts.append(dist.to_text().rstrip("\n"))
    return "\n".join(parts) + "\n"


def profile_from_text(text: str) -> TimingProfile:
    lines = text.strip().split("\n")
    if not lines or lines[0] != PROFILE_FORMAT:
        raise PufError("unrecognized profile format header")
    if len(lines) < 2 or not lines[1].startswith("conditions "):
        raise PufError("missing conditions line")
    conditions = dict(item.split("=") for item in lines[1].split()[1:])
    challenges, groups = [], []
    i = 2
    while i < len(lines):
        if not lines[i].startswith("challenge "):
            raise PufError(f"expected challenge header at line {i + 1}")
        head = lines[i].split()
        challenge = float(head[1])
        n = int(head[2].split("=")[1])
        i += 1
        samples: list[int] = []
        while i < len(lines) and not lines[i].startswith("challenge "):
            label, mass = lines[i].split("\t")
            samples.extend([int(label)] * round(float(mass) * n))
            i += 1
        if len(samples) != n:
            raise PufError(f"challenge {challenge}: reconstructed "
                           f"{len(samples)} of {n} samples")
        challenges.append(challenge)
        groups.append(tuple(samples))
    return TimingProfile(
        challenges=tuple(challenges), samples=tuple(groups),
        voltage=float(conditions["voltage"]),
        frequency=float(conditions["frequency"]),
        ambient_t0=float(conditions["ambient_t0"]),
        n_bins=int(conditions["n_bins"]),
    )
