import math
from dataclasses import replace

import numpy as np
import pytest

from siliclab.twin import (
    PRESETS,
    DeviceProfile,
    DigitalTwin,
    Job,
    ProfileError,
    SuccessEstimate,
    ThermalState,
    conditional_success_estimate,
    early_round_features,
    idle_step,
    load_profile,
    profile_from_text,
    profile_to_text,
    simulate_timing,
)
from siliclab.twin import _job_trace, leak_statistic


def make_profile(**overrides) -> DeviceProfile:
    base = dict(
        device_id="unit-0", voltage=7.6, frequency=300.0, base_round_time=100.0,
        temp_coefficient=0.002, ambient_t0=25.0, thermal_gain=30.0,
        thermal_decay=0.1, jitter_sigma=5.0,
    )
    base.update(overrides)
    return DeviceProfile(**base)


LEAKY_TPF = make_profile(
    device_id="leaky-0", leak_mode="leaky", leak_gain=800.0, jitter_sigma=2.0,
    thermal_gain=0.5, temp_coefficient=0.0005,
)


def run_sequence(profile, drives, rounds=64):
    twin = DigitalTwin(profile)
    samples = []
    for i, d in enumerate(drives):
        job = Job(extranonce2=f"seq-{i}".encode(), drive=d)
        samples.append(twin.execute_job(job, rounds_executed=rounds).sample)
    return samples, twin.state


class TestValidation:
    def test_bad_decay(self):
        with pytest.raises(ProfileError):
            make_profile(thermal_decay=1.5)

    def test_bad_round_time(self):
        with pytest.raises(ProfileError):
            make_profile(base_round_time=0.0)

    def test_bad_rounds(self):
        profile = make_profile()
        state = ThermalState.ambient(profile)
        with pytest.raises(ProfileError):
            simulate_timing(profile, state, Job(b"x"), rounds_executed=0)
        with pytest.raises(ProfileError):
            simulate_timing(profile, state, Job(b"x"), rounds_executed=129)


class TestThermal:
    def test_idle_decay_is_geometric(self):
        profile = make_profile(thermal_decay=0.2)
        state = ThermalState(temperature=60.0, history_accumulator=2.0)
        for k in range(1, 12):
            state = idle_step(profile, state)
            assert state.history_accumulator == pytest.approx(2.0 * 0.8**k)

    def test_echo_state_property(self):
        # two states 50 degC apart converge under the same 500-job input
        profile = make_profile()
        a = DigitalTwin(profile, ThermalState(temperature=25.0, history_accumulator=0.0))
        b = DigitalTwin(profile, ThermalState(temperature=75.0, history_accumulator=0.0))
        rng = np.random.default_rng(0)
        for i, d in enumerate(rng.random(500)):
            job = Job(extranonce2=f"esp-{i}".encode(), drive=float(d))
            a.execute_job(job)
            b.execute_job(job)
        assert abs(a.state.temperature - b.state.temperature) < 1e-6

    @pytest.mark.parametrize("tau", [1, 5, 10, 20])
    def test_fading_memory(self, tau):
        profile = make_profile(thermal_decay=0.15)
        rng = np.random.default_rng(3)
        drives = list(rng.random(40))
        t = 30  # observation index
        base, _ = run_sequence(profile, drives)
        bumped = list(drives)
        bumped[t - tau] = bumped[t - tau] + 0.5
        pert, _ = run_sequence(profile, bumped)
        delta = abs(pert[t].delta_t - base[t].delta_t)

        ref_drives = list(drives)
        ref_drives[t - 1] = ref_drives[t - 1] + 0.5
        ref, _ = run_sequence(profile, ref_drives)
        delta_1 = abs(ref[t].delta_t - base[t].delta_t)
        c = delta_1 / (1 - profile.thermal_decay)
        assert delta <= c * (1 - profile.thermal_decay) ** tau * (1 + 1e-6)

    def test_timing_uses_pre_update_temperature(self):
        profile = make_profile(jitter_sigma=0.0)
        state = ThermalState.ambient(profile)
        sample, new_state = simulate_timing(profile, state, Job(b"j0"), 64)
        assert sample.temperature == profile.ambient_t0
        assert new_state.temperature > profile.ambient_t0


class TestDeterminismAndJitter:
    def test_pure_function_of_inputs(self):
        profile = make_profile()
        drives = [0.2, 0.9, 0.5, 0.7]
        s1, end1 = run_sequence(profile, drives)
        s2, end2 = run_sequence(profile, drives)
        assert [x.delta_t for x in s1] == [x.delta_t for x in s2]
        assert end1 == end2

    def test_different_devices_differ(self):
        p1 = make_profile(device_id="dev-a")
        p2 = make_profile(device_id="dev-b")
        drives = [0.5] * 100
        s1, _ = run_sequence(p1, drives)
        s2, _ = run_sequence(p2, drives)
        diffs = [a.delta_t != b.delta_t for a, b in zip(s1, s2)]
        assert all(diffs)

    def test_null_mode_timing_independent_of_success(self):
        profile = make_profile(jitter_sigma=20.0)
        twin = DigitalTwin(profile)
        deltas, successes = [], []
        for i in range(10_000):
            r = twin.execute_job(Job(extranonce2=f"null-{i}".encode()), difficulty=16)
            deltas.append(r.sample.delta_t)
            successes.append(float(r.success))
        r = np.corrcoef(deltas, successes)[0, 1]
        assert abs(r) < 3 / math.sqrt(len(deltas))


class TestLeakage:
    def test_leaky_features_correlate_with_success(self):
        twin = DigitalTwin(LEAKY_TPF)
        feats, labels = [], []
        for i in range(10_000):
            job = Job(extranonce2=f"leak-{i}".encode())
            probe = twin.probe_timing(job, rounds=5)
            trace = _job_trace(job, 5)
            f = early_round_features(trace, probe, LEAKY_TPF, k=5)
            result = twin.execute_job(job, difficulty=16)
            feats.append(f[0])
            labels.append(float(result.success))
        r = np.corrcoef(feats, labels)[0, 1]
        assert abs(r) > 0.3

    def test_null_features_uncorrelated(self):
        profile = make_profile(jitter_sigma=2.0)
        twin = DigitalTwin(profile)
        feats, labels = [], []
        for i in range(10_000):
            job = Job(extranonce2=f"ctl-{i}".encode())
            probe = twin.probe_timing(job, rounds=5)
            trace = _job_trace(job, 5)
            feats.append(early_round_features(trace, probe, profile, k=5)[0])
            labels.append(float(twin.execute_job(job, difficulty=16).success))
        r = np.corrcoef(feats, labels)[0, 1]
        assert abs(r) < 3 / math.sqrt(len(feats))

    def test_identical_inputs_identical_features(self):
        profile = LEAKY_TPF
        state = ThermalState.ambient(profile)
        job = Job(b"same")
        s1, _ = simulate_timing(profile, state, job, 5)
        s2, _ = simulate_timing(profile, state, job, 5)
        t = _job_trace(job, 5)
        assert early_round_features(t, s1, profile, 5) == early_round_features(t, s2, profile, 5)

    def test_bad_k_rejected(self):
        job = Job(b"k")
        t = _job_trace(job, 5)
        s, _ = simulate_timing(LEAKY_TPF, ThermalState.ambient(LEAKY_TPF), job, 5)
        with pytest.raises(ProfileError):
            early_round_features(t, s, LEAKY_TPF, 0)
        with pytest.raises(ProfileError):
            early_round_features(t, s, LEAKY_TPF, 65)


class TestConditionalSuccess:
    def test_difficulty_one_always_succeeds(self):
        est = conditional_success_estimate(LEAKY_TPF, lambda s: s > 0, 1, 2000, seed=1)
        assert est.probability == pytest.approx(1.0)

    def test_unconditioned_rate(self):
        est = conditional_success_estimate(
            make_profile(), lambda s: True, 256, 100_000, seed=2
        )
        p = 1 / 256
        assert abs(est.probability - p) < 3 * math.sqrt(p * (1 - p) / est.samples)

    def test_law_of_total_probability(self):
        lo = conditional_success_estimate(LEAKY_TPF, lambda s: s < 0, 64, 20_000, seed=3)
        hi = conditional_success_estimate(LEAKY_TPF, lambda s: s >= 0, 64, 20_000, seed=3)
        n = lo.samples + hi.samples
        mixed = (lo.probability * lo.samples + hi.probability * hi.samples) / n
        p = 1 / 64
        assert abs(mixed - p) < 3 * math.sqrt(p * (1 - p) / n)

    def test_empty_bucket_is_no_data(self):
        est = conditional_success_estimate(LEAKY_TPF, lambda s: False, 16, 1000, seed=4)
        assert est.no_data and est.probability is None

    def test_small_budget_rejected(self):
        with pytest.raises(ProfileError):
            conditional_success_estimate(LEAKY_TPF, lambda s: True, 16, 10)


class TestProfiles:
    def test_presets_exist(self):
        for name in ("s9", "lv06", "lbbox"):
            assert isinstance(load_profile(name), DeviceProfile)

    def test_hashrate_ordering(self):
        # S9 is orders of magnitude faster than the single-chip devices
        assert PRESETS["s9"].base_round_time < PRESETS["lv06"].base_round_time
        assert PRESETS["lv06"].base_round_time < PRESETS["lbbox"].base_round_time

    def test_text_round_trip(self, tmp_path):
        profile = replace(LEAKY_TPF, device_id="roundtrip")
        text = profile_to_text(profile)
        assert profile_from_text(text) == profile
        path = tmp_path / "dev.profile"
        path.write_text(text)
        assert load_profile(str(path)) == profile

    def test_unknown_key_rejected(self):
        with pytest.raises(ProfileError):
            profile_from_text("nonsense=1\n")

    def test_unknown_name_rejected(self):
        with pytest.raises(ProfileError):
            load_profile("not-a-preset")


class TestLeakStatistic:
    def test_range(self):
        for i in range(50):
            t = _job_trace(Job(extranonce2=f"r-{i}".encode()), 5)
            assert -1.0 <= leak_statistic(t, 5) <= 1.0
