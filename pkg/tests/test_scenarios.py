import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydromfc.scenarios import (
    DAY,
    LockFlush,
    affected_samples,
    bias,
    build_scenario,
    evaluate_band,
    lock_flush_signal,
    parse_profile,
    transport_delay,
)


@pytest.mark.parametrize("q, b", [(1000.0, 40.0), (0.0, 10.0), (500.0, 25.0)])
def test_bias_examples(q, b):
    assert bias(q) == pytest.approx(b)


def test_bias_rejects_negative():
    with pytest.raises(ValueError):
        bias(-1.0)


@given(st.floats(0, 5000), st.floats(0, 5000))
def test_bias_affine_increasing(a, b):
    if a <= b:
        assert bias(a) <= bias(b)
    assert bias(a) - bias(0.0) == pytest.approx(0.03 * a)


class TestLockFlush:
    P = LockFlush(3600.0)

    def test_defaults(self):
        assert (self.P.amplitude, self.P.duration, self.P.end) == (100.0, 900.0, 4500.0)

    @pytest.mark.parametrize("t, w", [(0.0, 0.0), (3599.9, 0.0), (3600.0, 100.0),
                                      (4499.0, 100.0), (4500.0, 0.0)])
    def test_signal(self, t, w):
        assert lock_flush_signal([self.P], t) == w

    def test_overlap_adds(self):
        assert lock_flush_signal([self.P, LockFlush(4000.0)], 4100.0) == 200.0

    def test_seven_samples_at_two_minutes(self):
        assert affected_samples(self.P, 120.0) == 7
        assert affected_samples(LockFlush(3650.0), 120.0) == 7
        assert affected_samples(LockFlush(3600.0, duration=960.0), 120.0) == 8
        assert affected_samples(self.P, 60.0) == 15


def test_pulse_bookkeeping():
    sc = build_scenario(2, 120.0, seed=3)
    dt = 10.0
    t = np.arange(0.0, sc.duration, dt)
    total = sum(sc.w(s) for s in t) * dt
    assert total == sum(p.amplitude * p.duration for p in sc.lock_flushes)
    assert len(sc.lock_flushes) == 8


class TestBuildScenario:
    @pytest.mark.parametrize("n", [1, 2])
    def test_four_days(self, n):
        sc = build_scenario(n, 120.0)
        assert sc.duration == 4 * DAY == 345_600.0
        assert sc.n_steps == 2880

    def test_determinism(self):
        a, b = build_scenario(1, 120.0, 42), build_scenario(1, 120.0, 42)
        assert a.lock_flushes == b.lock_flushes
        np.testing.assert_array_equal(a.q_e_profile.values, b.q_e_profile.values)
        assert build_scenario(1, 120.0, 7).lock_flushes != a.lock_flushes

    def test_flushes_do_not_overlap(self):
        for seed in range(20):
            starts = [p.start for p in build_scenario(1, 60.0, seed).lock_flushes]
            assert np.all(np.diff(starts) >= 3600.0)

    def test_flush_starts_on_sampling_grid(self):
        for T_s in (60.0, 120.0):
            for p in build_scenario(2, T_s, 1).lock_flushes:
                assert p.start % T_s == 0

    def test_scenario3_has_no_flushes_and_a_surge(self):
        sc = build_scenario(3, 120.0)
        assert sc.lock_flushes == []
        assert max(sc.q_e_profile.values) + bias(max(sc.q_e_profile.values)) > 1400.0

    def test_profiles_in_range(self):
        for n in (1, 2, 3):
            q = build_scenario(n, 120.0).q_e_profile.values
            assert q.min() >= 400.0 and q.max() <= 1450.0

    @pytest.mark.parametrize("n", [0, 4, "1"])
    def test_invalid(self, n):
        with pytest.raises(ValueError):
            build_scenario(n, 120.0)

    def test_bias_flag(self):
        sc = build_scenario(1, 120.0, bias_enabled=False)
        assert sc.bias(0.0) == 0.0


def test_profile_parser_rejects_unordered_knots():
    text = "[scenario]\nduration = 1 h\n[inflow]\nknots =\n  0 h, 1 m3/s\n  0 h, 2 m3/s\n"
    with pytest.raises(ValueError):
        parse_profile(text)


def test_profile_parser_needs_units():
    text = "[scenario]\nduration = 1 h\n[inflow]\nknots =\n  0, 1 m3/s\n"
    with pytest.raises(ValueError):
        parse_profile(text)


class TestEvaluateBand:
    def test_on_setpoint(self):
        r = evaluate_band(np.full(10, 5.0), np.full(10, 5.0))
        assert r.within_band and r.max_over == 0.0 and r.max_under == 0.0

    def test_constant_offset(self):
        r = evaluate_band(np.full(10, 5.12), np.full(10, 5.0), 0.10, dt=120.0)
        assert not r.within_band
        assert r.max_over == pytest.approx(0.12)
        assert r.violation_time == 1200.0

    def test_under(self):
        r = evaluate_band(np.array([5.0, 4.95, 5.0]), np.full(3, 5.0))
        assert r.max_under == pytest.approx(0.05) and r.within_band
        assert r.max_excursion == pytest.approx(0.05)

    def test_misaligned(self):
        with pytest.raises(ValueError):
            evaluate_band(np.zeros(3), np.zeros(4))

    @given(st.lists(st.floats(-0.3, 0.3), min_size=1, max_size=50))
    def test_within_band_iff_no_violation(self, d):
        r = evaluate_band(np.array(d), np.zeros(len(d)), 0.1)
        assert r.within_band == (r.violation_time == 0.0)

    def test_as_dict_keys(self):
        keys = evaluate_band(np.zeros(2), np.zeros(2)).as_dict().keys()
        assert set(keys) == {"max_over", "max_under", "violation_time", "within_band",
                             "band_halfwidth", "measured_transport_delay"}


class TestTransportDelay:
    def test_recovers_synthetic_lag(self):
        dt = 120.0
        t = dt * np.arange(600)
        q = np.where(t < 10 * 3600, 700.0, 800.0) + 30 * np.sin(t / 5000.0) * (t > 10 * 3600)
        lag = 45 * 60
        # the wave front raises the remote level in proportion to the inflow change
        z = 10.0 + 1e-3 * (np.interp(t - lag, t, q) - 700.0)
        assert transport_delay(t, q, z) == pytest.approx(lag, abs=dt)

    def test_no_change_is_nan(self):
        t = np.arange(10.0)
        assert np.isnan(transport_delay(t, np.full(10, 5.0), np.zeros(10)))
