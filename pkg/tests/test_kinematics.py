import math

import numpy as np
import pytest

from platoonsim.kinematics import (VehicleState, advance_state, brake_distance,
                                   hard_brake, make_spec, motion_pieces)


def euler_advance(x, v, a, dt, steps=1000):
    """Tiny-step clamped integrator used as the independent cross-check."""
    h = dt / steps
    for _ in range(steps):
        v_new = max(0.0, v + a * h)
        x += (v + v_new) / 2.0 * h
        v = v_new
    return x, v


class TestAdvanceState:
    def test_plain_arithmetic(self):
        s = advance_state(VehicleState(0.0, 100.0, 10.0), 1.0, 0.1)
        assert s.x == pytest.approx(101.005)
        assert s.v == pytest.approx(10.1)
        assert s.t == pytest.approx(0.1)

    def test_rest_stays_at_rest(self):
        s = advance_state(VehicleState(2.0, 50.0, 0.0), 0.0, 5.0)
        assert (s.x, s.v) == (50.0, 0.0)

    def test_zero_crossing_is_exact(self):
        s = advance_state(VehicleState(0.0, 0.0, 1.0), -1.5, 1.0)
        assert s.v == 0.0
        assert s.x == pytest.approx(1.0 / 3.0, abs=1e-12)
        # 1 ms Euler cross-check
        x_e, v_e = euler_advance(0.0, 1.0, -1.5, 1.0)
        assert s.x == pytest.approx(x_e, abs=1e-4)

    def test_speed_cap_crossing(self):
        s = advance_state(VehicleState(0.0, 0.0, 9.9), 1.0, 0.2, speed_max=10.0)
        assert s.v == 10.0
        # 0.1 s accelerating + 0.1 s at the cap
        assert s.x == pytest.approx(9.9 * 0.1 + 0.5 * 1.0 * 0.01 + 10.0 * 0.1)

    def test_negative_dt_rejected(self):
        with pytest.raises(ValueError):
            advance_state(VehicleState(0.0, 0.0, 1.0), 0.0, -0.1)

    def test_composition(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            v0 = rng.uniform(0, 30)
            a = rng.uniform(-1.5, 1.0)
            d1, d2 = rng.uniform(0.01, 2.0, size=2)
            if v0 + a * (d1 + d2) < 0 or v0 + a * (d1 + d2) > 40:
                continue
            s0 = VehicleState(0.0, rng.uniform(-100, 100), v0)
            once = advance_state(s0, a, d1 + d2, 40.0)
            twice = advance_state(advance_state(s0, a, d1, 40.0), a, d2, 40.0)
            assert once.x == pytest.approx(twice.x, abs=1e-12)
            assert once.v == pytest.approx(twice.v, abs=1e-12)


class TestHardBrake:
    def test_partial_horizon(self):
        out = hard_brake(10.0, -1.5, 2.0)
        assert out.distance == pytest.approx(17.0)
        assert out.speed == pytest.approx(7.0)

    def test_full_stop(self):
        out = hard_brake(10.0, -1.5, 10.0)
        assert out.distance == pytest.approx(100.0 / 3.0)
        assert out.speed == 0.0
        assert out.stop_time == pytest.approx(10.0 / 1.5)

    def test_zero_speed(self):
        out = hard_brake(0.0, -0.6, 3.0)
        assert out.distance == 0.0
        assert out.speed == 0.0

    def test_monotone_in_horizon(self):
        horizons = np.linspace(0.0, 12.0, 121)
        outs = [hard_brake(9.0, -0.9, h) for h in horizons]
        dists = [o.distance for o in outs]
        speeds = [o.speed for o in outs]
        assert all(b >= a - 1e-12 for a, b in zip(dists, dists[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(speeds, speeds[1:]))
        stop = 9.0 / 0.9
        settled = [o.distance for o, h in zip(outs, horizons) if h >= stop]
        assert max(settled) - min(settled) < 1e-12

    def test_infinite_horizon_closed_form(self):
        for v0 in (0.0, 3.3, 22.0):
            for b in (-1.5, -0.9, -0.6):
                assert hard_brake(v0, b, math.inf).distance == \
                    pytest.approx(brake_distance(v0, b), abs=1e-12)


class TestMotionPieces:
    def test_split_covers_interval(self):
        pieces = motion_pieces(VehicleState(1.0, 5.0, 0.5), -1.5, 2.0)
        assert pieces[0].t0 == 1.0
        assert pieces[-1].t1 == pytest.approx(3.0)
        assert pieces[1].v0 == 0.0
        assert pieces[1].a == 0.0

    def test_no_split_needed(self):
        pieces = motion_pieces(VehicleState(0.0, 3.0, 10.0), 0.5, 1.0, speed_max=22.0)
        assert len(pieces) == 1


class TestVehicleSpec:
    def test_class_defaults(self):
        small = make_spec(0, "small")
        mid = make_spec(1, "mid")
        large = make_spec(2, "large")
        assert (small.length, small.accel_max, small.accel_min, small.mech_delay) == \
            (4.5, 1.0, -1.5, 0.07)
        assert (mid.length, mid.accel_max, mid.accel_min, mid.mech_delay) == \
            (7.5, 0.9, -0.9, 0.15)
        assert mid.vclass == "midsize"
        assert (large.length, large.accel_max, large.accel_min, large.mech_delay) == \
            (15.0, 0.6, -0.6, 0.5)
        assert small.stop_gap == 1.0 and small.speed_max == 22.0

    def test_unknown_class(self):
        with pytest.raises(ValueError):
            make_spec(0, "scooter")

    def test_bad_params_rejected(self):
        with pytest.raises(ValueError):
            make_spec(0, "small", stop_gap=-1.0)
