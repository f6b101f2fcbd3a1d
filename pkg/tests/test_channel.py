import numpy as np
import pytest

from platoonsim.channel import (CommConfig, Link, StatusMessage, kappa_floor)


def make_msg(tick, sent_at, accel=0.0):
    return StatusMessage(sender=0, tick=tick, sent_at=sent_at, accel=accel,
                         pred_t=sent_at + 0.25, pred_x=0.0, pred_v=0.0,
                         mech_delay=0.15, length=7.5, accel_min=-0.9)


def make_link(cfg=None, phi=0.05, seed=0):
    cfg = cfg or CommConfig()
    rng = np.random.default_rng(seed)
    return Link(cfg, rng, sender_offset=0.0, receiver_offset=phi)


class TestKappaFloor:
    # the three published example rows: phi=0.05, delta=0.1
    @pytest.mark.parametrize("tau,expected", [
        (0.069, 0.15),
        (0.045, 0.05),
        (0.053, 0.15),
    ])
    def test_example_rows(self, tau, expected):
        assert kappa_floor(0.05, tau, 0.0, 0.1) == pytest.approx(expected)

    def test_floor_brackets_arrival(self):
        rng = np.random.default_rng(4)
        for _ in range(2000):
            phi = float(rng.uniform(0, 0.1))
            tau = float(rng.uniform(0, 0.3))
            d = float(rng.choice([0.0, 0.02]))
            k = kappa_floor(phi, tau, d, 0.1)
            assert k >= tau + d - 1e-12
            assert k < tau + d + 0.1 + 1e-12

    def test_step_function_in_tau(self):
        # right-continuous steps exactly at phi + k*delta
        phi = 0.03
        assert kappa_floor(phi, phi, 0.0, 0.1) == pytest.approx(phi)
        assert kappa_floor(phi, phi + 1e-9, 0.0, 0.1) == pytest.approx(phi + 0.1)

    def test_decision_delay_shifts(self):
        assert kappa_floor(0.05, 0.045, 0.02, 0.1) == pytest.approx(0.15)

    def test_phase_validation(self):
        with pytest.raises(ValueError):
            kappa_floor(0.2, 0.05, 0.0, 0.1)


class TestTransmit:
    def test_no_loss_arrival_window(self):
        link = make_link(CommConfig(loss_rate=0.0), seed=1)
        for k in range(500):
            msg = make_msg(k, k * 0.1)
            arrival = link.transmit(msg)
            assert arrival is not None
            assert 0.04 - 1e-12 <= arrival - msg.sent_at <= 0.08 + 1e-12

    def test_total_loss(self):
        link = make_link(CommConfig(loss_rate=1.0), seed=2)
        assert all(link.transmit(make_msg(k, k * 0.1)) is None for k in range(100))

    def test_empirical_loss_rate(self):
        # spec tolerance: within one percentage point over 1e5 messages
        for p in (0.01, 0.25, 0.5):
            link = make_link(CommConfig(loss_rate=p), seed=3)
            n = 100_000
            lost = sum(link.transmit(make_msg(k, k * 0.1)) is None
                       for k in range(n))
            assert abs(lost / n - p) < 0.01

    def test_deterministic_stream(self):
        a = make_link(CommConfig(loss_rate=0.3), seed=9)
        b = make_link(CommConfig(loss_rate=0.3), seed=9)
        seq_a = [a.transmit(make_msg(k, k * 0.1)) for k in range(1000)]
        seq_b = [b.transmit(make_msg(k, k * 0.1)) for k in range(1000)]
        assert seq_a == seq_b


class TestKappaSelection:
    def test_window_max(self):
        link = make_link()
        for arrival, floor in [(1.0, 0.05), (2.0, 0.15), (3.0, 0.05)]:
            link.record_floor(arrival, floor)
        assert link.select_kappa(5.0, heavy_loss=False) == pytest.approx(0.15)

    def test_heavy_loss_extension(self):
        link = make_link()
        link.record_floor(1.0, 0.15)
        assert link.select_kappa(2.0, heavy_loss=True) == pytest.approx(1.15)

    def test_singleton(self):
        link = make_link()
        link.record_floor(1.0, 0.05)
        assert link.select_kappa(1.5, heavy_loss=False) == pytest.approx(0.05)

    def test_old_samples_age_out(self):
        link = make_link()
        msg = make_msg(0, 0.0)
        link.deliver(msg, 0.05)  # computes a floor sample at arrival 0.05
        link.record_floor(1.0, 0.35)
        # 10 s window: at t=11.5 the 0.35 sample (arrival 1.0) is gone
        assert link.select_kappa(10.5, heavy_loss=False) == pytest.approx(0.35)
        k = link.select_kappa(11.5, heavy_loss=False)
        assert k is None or k < 0.35

    def test_bootstrap_none(self):
        link = make_link()
        assert link.select_kappa(0.0, heavy_loss=False) is None

    def test_extra_cycles(self):
        link = make_link(CommConfig(extra_cycles=2))
        link.record_floor(1.0, 0.05)
        assert link.select_kappa(1.5, heavy_loss=False) == pytest.approx(0.25)


class TestLossEstimate:
    def test_bootstrap_uses_configured_rate(self):
        link = make_link(CommConfig(loss_rate=0.25))
        assert link.loss_estimate(0.0) == 0.25
        assert link.heavy_loss(0.0)

    def test_measured_rate(self):
        link = make_link(CommConfig(loss_rate=0.0))
        t = 0.0
        for k in range(100):
            t = k * 0.1
            link.outcomes.append((t, k % 2 == 0))  # 50% delivered
            link._outcomes_ok += k % 2 == 0
        assert link.loss_estimate(t) == pytest.approx(0.5, abs=0.02)
        assert link.heavy_loss(t)


class TestBufferRetention:
    def test_pruning(self):
        link = make_link()
        for k in range(600):
            link.deliver(make_msg(k, k * 0.1), k * 0.1 + 0.05)
        # 30 s retention at t ~ 60
        assert min(m.sent_at for m in link.delivered.values()) >= 60.0 - 30.1
        assert link.last_known.tick == 599

    def test_tick_roundtrip(self):
        link = make_link()
        for k in (0, 7, 599, 12345):
            assert link.tick_of(k * 0.1) == k
