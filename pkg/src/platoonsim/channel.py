"""Discrete communication cycle: random transmission delay, Bernoulli packet
loss, and the grid-quantized send-to-use delay.

A status message sent at a grid time of the sender becomes usable by the
receiver only at its own decision grid, so the minimum send-to-use delay
(kappa floor) is quantized to phase + nu * delta.  Receivers track the floor
over a trailing window and deliberately use its maximum (plus optional extra
whole cycles) so the effective information age stays constant from cycle to
cycle instead of jittering with the transmission delay.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

KAPPA_WINDOW = 10.0       # trailing window for the floor maximum, seconds
BUFFER_RETENTION = 30.0   # delivered-message retention, seconds
HEAVY_LOSS_THRESHOLD = 0.10
HEAVY_LOSS_EXTRA = 1.0    # extra delay under heavy loss, seconds
_MIN_WINDOW_MSGS = 30     # measured-loss bootstrap threshold


@dataclass(frozen=True)
class CommConfig:
    delta: float = 0.1
    tau_min: float = 0.04
    tau_max: float = 0.08
    loss_rate: float = 0.0
    decision_delay: float = 0.0
    extra_cycles: int = 0  # deliberate extra delay mu, in whole cycles

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if not (0.0 <= self.tau_min <= self.tau_max):
            raise ValueError("need 0 <= tau_min <= tau_max")
        if not (0.0 <= self.loss_rate <= 1.0):
            raise ValueError("loss_rate must lie in [0, 1]")
        if self.decision_delay < 0.0 or self.extra_cycles < 0:
            raise ValueError("bad decision_delay/extra_cycles")


@dataclass(frozen=True)
class StatusMessage:
    """Per-cycle broadcast: the decision plus the exact state it produces.

    pred_x / pred_v are the sender's state at pred_t = sent_at + mech_delay +
    delta, exact under perfect actuation of the committed pipeline.  Static
    braking parameters ride along so the receiver can evaluate the envelope.
    """

    sender: int
    tick: int            # sender grid index; sent_at = offset + tick * delta
    sent_at: float
    accel: float
    pred_t: float
    pred_x: float
    pred_v: float
    mech_delay: float
    length: float
    accel_min: float


def kappa_floor(phi: float, tau: float, d: float, delta: float) -> float:
    """Smallest phi + nu*delta at or past the arrival: the send-to-use floor.

    nu is the least natural number with tau + d <= phi + nu*delta.
    """
    if not (0.0 <= phi < delta):
        raise ValueError(f"phase {phi} outside [0, delta)")
    nu = math.ceil((tau + d - phi) / delta - 1e-12)
    return phi + max(nu, 0) * delta


class Link:
    """Receiver-side state of one PV->FV communication link.

    The kappa-floor window maximum and the measured delivery ratio are kept
    incrementally (monotonic deque / running count) so per-message work is
    O(1) amortized.
    """

    def __init__(self, cfg: CommConfig, rng: np.random.Generator,
                 sender_offset: float, receiver_offset: float):
        self.cfg = cfg
        self.rng = rng
        self.sender_offset = sender_offset
        self.phi = (receiver_offset - sender_offset) % cfg.delta
        self.delivered: dict[int, StatusMessage] = {}
        self._oldest_tick: int | None = None
        self.kappa_samples: deque[tuple[float, float]] = deque()  # (arrival, floor)
        self._kappa_max: deque[tuple[float, float]] = deque()     # monotonic max
        self.outcomes: deque[tuple[float, bool]] = deque()        # (sent_at, delivered)
        self._outcomes_ok = 0
        self.last_known: StatusMessage | None = None
        self.trace: list[tuple] | None = None

    def enable_trace(self):
        self.trace = []

    def transmit(self, msg: StatusMessage) -> float | None:
        """Draw the loss/delay outcome for one message; returns arrival or None.

        One (loss, tau) pair is drawn per message in send order, so the
        stream is reproducible for the link regardless of other links.
        """
        cfg = self.cfg
        lost = self.rng.random() < cfg.loss_rate
        tau = cfg.tau_min + (cfg.tau_max - cfg.tau_min) * self.rng.random()
        self.outcomes.append((msg.sent_at, not lost))
        self._outcomes_ok += not lost
        self._trim_outcomes(msg.sent_at)
        if lost:
            if self.trace is not None:
                self.trace.append((msg.sender, msg.tick, msg.sent_at, tau, 1, "", ""))
            return None
        arrival = msg.sent_at + tau
        floor = kappa_floor(self.phi, tau, cfg.decision_delay, cfg.delta)
        if self.trace is not None:
            self.trace.append((msg.sender, msg.tick, msg.sent_at, tau, 0, arrival, floor))
        return arrival

    def _trim_outcomes(self, now: float):
        while self.outcomes and self.outcomes[0][0] <= now - KAPPA_WINDOW:
            _, ok = self.outcomes.popleft()
            self._outcomes_ok -= ok

    def record_floor(self, arrival: float, floor: float):
        self.kappa_samples.append((arrival, floor))
        while self._kappa_max and self._kappa_max[-1][1] <= floor:
            self._kappa_max.pop()
        self._kappa_max.append((arrival, floor))

    def deliver(self, msg: StatusMessage, arrival: float):
        self.delivered[msg.tick] = msg
        if self._oldest_tick is None:
            self._oldest_tick = msg.tick
        self.last_known = msg
        tau = arrival - msg.sent_at
        self.record_floor(arrival,
                          kappa_floor(self.phi, tau, self.cfg.decision_delay,
                                      self.cfg.delta))
        # prune the delivered buffer (ticks are ordered by construction)
        horizon = arrival - BUFFER_RETENTION
        tick0 = int((horizon - self.sender_offset) / self.cfg.delta)
        while self._oldest_tick is not None and self._oldest_tick < tick0:
            self.delivered.pop(self._oldest_tick, None)
            self._oldest_tick += 1

    def oldest_delivered(self) -> StatusMessage | None:
        if not self.delivered or self._oldest_tick is None:
            return None
        k = self._oldest_tick
        while k not in self.delivered:
            k += 1
        self._oldest_tick = k
        return self.delivered[k]

    def _trim_kappa(self, now: float):
        cutoff = now - KAPPA_WINDOW
        while self.kappa_samples and self.kappa_samples[0][0] <= cutoff:
            self.kappa_samples.popleft()
        while self._kappa_max and self._kappa_max[0][0] <= cutoff:
            self._kappa_max.popleft()

    def select_kappa(self, now: float, heavy_loss: bool) -> float | None:
        """Window-max of the floor, plus extra cycles and the heavy-loss extension.

        The result stays on the phi + k*delta grid so now - kappa lands on the
        sender's grid.  None before any message has been received.
        """
        self._trim_kappa(now)
        best = None
        for arr, floor in self._kappa_max:
            if arr <= now:
                best = floor if best is None else max(best, floor)
            else:
                break
        if best is None:
            return None
        kappa = best + self.cfg.extra_cycles * self.cfg.delta
        if heavy_loss:
            kappa += math.ceil(HEAVY_LOSS_EXTRA / self.cfg.delta - 1e-12) * self.cfg.delta
        return kappa

    def loss_estimate(self, now: float) -> float:
        """Measured loss over the trailing window; configured rate until warm."""
        self._trim_outcomes(now)
        n = len(self.outcomes)
        if n < _MIN_WINDOW_MSGS:
            return self.cfg.loss_rate
        return 1.0 - self._outcomes_ok / n

    def heavy_loss(self, now: float) -> bool:
        return self.loss_estimate(now) > HEAVY_LOSS_THRESHOLD

    def latest_delivered_at_or_before(self, tick: int) -> StatusMessage | None:
        """Newest delivered message with tick <= the given sender tick."""
        delivered = self.delivered
        if not delivered or self._oldest_tick is None:
            return None
        k = tick
        while k >= self._oldest_tick:
            msg = delivered.get(k)
            if msg is not None:
                return msg
            k -= 1
        return None

    def tick_of(self, sent_at: float) -> int:
        """Sender grid index of a send time (robust to float rounding)."""
        return round((sent_at - self.sender_offset) / self.cfg.delta)


TRACE_HEADER = "link,tick,sent_at,tau,lost,arrival,kappa_floor"


def trace_rows(link: Link) -> list[str]:
    if link.trace is None:
        return []
    return [",".join(repr(v) if isinstance(v, float) else str(v) for v in row)
            for row in link.trace]
