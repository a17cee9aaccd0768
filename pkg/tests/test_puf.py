import pytest

from siliclab.infotheory import FiniteDistribution, distinguishability_witness
from siliclab.puf import (
    DEFAULT_THRESHOLD,
    AuthDecision,
    PufError,
    TimingProfile,
    bucketize,
    distinguish,
    enroll,
    profile_from_text,
    profile_to_text,
    respond,
    total_variation,
    verify,
)
from siliclab.twin import DeviceProfile


def device(device_id: str) -> DeviceProfile:
    return DeviceProfile(
        device_id=device_id, voltage=7.6, frequency=300.0, base_round_time=100.0,
        temp_coefficient=0.002, ambient_t0=25.0, thermal_gain=10.0,
        thermal_decay=0.1, jitter_sigma=100.0,
    )


CHALLENGES = (0.2, 0.6, 1.0)
DEV_A = device("puf-a")
DEV_B = device("puf-b")


@pytest.fixture(scope="module")
def profile_a():
    return enroll(DEV_A, CHALLENGES, 400, seed=1)


@pytest.fixture(scope="module")
def profile_b():
    return enroll(DEV_B, CHALLENGES, 400, seed=2)


class TestBuckets:
    def test_bucketize_covers_all_bins(self):
        d = bucketize([0, 5, 10, 15], 0, 16, n_bins=16)
        assert d.outcomes == tuple(range(16))
        assert sum(d.masses) == pytest.approx(1.0)

    def test_out_of_range_clamps(self):
        d = bucketize([-100, 1000], 0, 16, n_bins=16)
        assert d.mass(0) == 0.5 and d.mass(15) == 0.5

    def test_total_variation_known_value(self):
        p = FiniteDistribution.from_pairs([(0, 0.6), (1, 0.4)])
        q = FiniteDistribution.from_pairs([(0, 0.5), (1, 0.5)])
        assert total_variation(p, q) == pytest.approx(0.1)

    def test_total_variation_symmetric(self):
        p = FiniteDistribution.from_pairs([(0, 0.7), (1, 0.3)])
        q = FiniteDistribution.from_pairs([(0, 0.2), (1, 0.8)])
        assert total_variation(p, q) == total_variation(q, p)

    def test_mismatched_buckets_rejected(self):
        p = FiniteDistribution.from_pairs([(0, 1.0)])
        q = FiniteDistribution.from_pairs([(1, 1.0)])
        with pytest.raises(PufError):
            total_variation(p, q)


class TestEnrollment:
    def test_deterministic(self):
        a = enroll(DEV_A, (0.5,), 120, seed=3)
        b = enroll(DEV_A, (0.5,), 120, seed=3)
        assert a == b

    def test_single_challenge(self):
        p = enroll(DEV_A, (0.5,), 100, seed=4)
        assert len(p.challenges) == 1 and len(p.samples[0]) == 100

    def test_under_budget_rejected(self):
        with pytest.raises(PufError):
            enroll(DEV_A, (0.5,), 50, seed=5)

    def test_profile_invariants(self):
        with pytest.raises(PufError):
            TimingProfile(challenges=(0.5,), samples=((1,) * 10,),
                          voltage=7.6, frequency=300.0, ambient_t0=25.0)
        with pytest.raises(PufError):
            TimingProfile(challenges=(0.5, 0.5), samples=((1,) * 100,) * 2,
                          voltage=7.6, frequency=300.0, ambient_t0=25.0)

    def test_convergence_trend(self):
        # empirical gap between independent same-device sessions shrinks with N
        gaps = []
        for n in (100, 400, 1600):
            tv_sum = 0.0
            for trial in range(3):
                p = enroll(DEV_A, (0.5,), n, seed=10 + trial)
                r = respond(DEV_A, (0.5,), n, seed=20 + trial)
                tv_sum += verify(p, r, threshold=1.0).statistic
            gaps.append(tv_sum / 3)
        assert gaps[0] > gaps[1] > gaps[2]


class TestVerification:
    def test_identical_samples_statistic_zero(self, profile_a):
        responses = dict(zip(profile_a.challenges, profile_a.samples))
        decision = verify(profile_a, responses)
        assert decision.accept and decision.statistic == 0.0

    def test_same_device_accepts(self, profile_a):
        accepted = sum(
            verify(profile_a, respond(DEV_A, CHALLENGES, 400, seed=100 + t)).accept
            for t in range(30)
        )
        assert accepted >= 29

    def test_cross_device_rejects(self, profile_a):
        rejected = sum(
            not verify(profile_a, respond(DEV_B, CHALLENGES, 400, seed=200 + t)).accept
            for t in range(30)
        )
        assert rejected >= 29

    def test_missing_challenge_rejected(self, profile_a):
        with pytest.raises(PufError):
            verify(profile_a, {0.2: profile_a.samples[0]})

    def test_decision_consistency_enforced(self):
        with pytest.raises(PufError):
            AuthDecision(accept=True, statistic=0.5, threshold=0.15,
                         challenge_gaps=((0.5, 0.5),))


class TestDistinguish:
    def test_same_profile_absent(self, profile_a):
        assert distinguish(profile_a, profile_a, tol=0.05) is None

    def test_distinct_devices_witnessed(self, profile_a, profile_b):
        witness = distinguish(profile_a, profile_b, tol=DEFAULT_THRESHOLD)
        assert witness is not None
        challenge, bucket, gap = witness
        assert challenge in CHALLENGES and 0 <= bucket < 16 and gap > 0.15

    def test_hand_built_gap(self):
        p = FiniteDistribution.from_pairs([(0, 0.6), (1, 0.4)])
        q = FiniteDistribution.from_pairs([(0, 0.5), (1, 0.5)])
        witness = distinguishability_witness(p, q, 0.05)
        assert witness is not None and witness[1] == pytest.approx(0.1)

    def test_witness_soundness_on_replay(self, profile_a, profile_b):
        witness = distinguish(profile_a, profile_b, tol=DEFAULT_THRESHOLD)
        challenge, bucket, _ = witness
        a_ref = profile_a.samples[profile_a.challenge_index(challenge)]
        b_ref = profile_b.samples[profile_b.challenge_index(challenge)]
        lo = min(min(a_ref), min(b_ref))
        hi = max(max(a_ref), max(b_ref))
        hits = 0
        trials = 30
        for t in range(trials):
            fresh_a = respond(DEV_A, (challenge,), 400, seed=500 + t)[challenge]
            fresh_b = respond(DEV_B, (challenge,), 400, seed=700 + t)[challenge]
            qa = bucketize(fresh_a, lo, hi)
            qb = bucketize(fresh_b, lo, hi)
            hits += abs(qa.mass(bucket) - qb.mass(bucket)) > DEFAULT_THRESHOLD / 2
        assert hits >= 0.9 * trials

    def test_disjoint_challenges_rejected(self, profile_a):
        other = enroll(DEV_B, (0.4,), 100, seed=6)
        with pytest.raises(PufError):
            distinguish(profile_a, other, tol=0.1)


class TestSerialization:
    def test_round_trip_preserves_samples(self, profile_a):
        restored = profile_from_text(profile_to_text(profile_a))
        assert restored.challenges == profile_a.challenges
        assert restored.voltage == profile_a.voltage
        assert restored.n_bins == profile_a.n_bins
        for a, b in zip(restored.samples, profile_a.samples):
            assert sorted(a) == sorted(b)

    def test_round_trip_verifies_identically(self, profile_a):
        restored = profile_from_text(profile_to_text(profile_a))
        responses = respond(DEV_A, CHALLENGES, 400, seed=900)
        assert verify(restored, responses) == verify(profile_a, responses)

    def test_bad_header_rejected(self):
        with pytest.raises(PufError):
            profile_from_text("other-format v0\n")
