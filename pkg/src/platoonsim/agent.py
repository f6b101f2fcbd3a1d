"""Per-vehicle controllers: the follower's decision tick and the leader's
profile-driven pipeline.

Both run the same commitment pipeline: a decision made at grid time t0 is
executed over (t0 + mech_delay, t0 + mech_delay + delta], so the execution
intervals tile the timeline and every broadcast can carry the sender's exact
state at the end of the window it just committed (t1).

The follower reconstructs the predecessor state for its envelope from the
buffered status messages.  The message selected by the smoothed send-to-use
delay kappa is the knowledge cutoff; when its predicted time lies beyond t1
the known committed segments are walked to the exact state at t1 (staleness
0), and when messages are missing the estimate falls back to an older anchor
whose age is covered by the conservative hard-brake credit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import dataclasses

from .channel import Link, StatusMessage
from .kinematics import VehicleSpec, VehicleState, advance_state, hard_brake
from .safety import (AblationFlags, DecisionInput, PvStatic, compute_domains,
                     decide_accel, elastic_min_gap)

ACCEL_STEP_FRACTION = 0.1   # heavy-loss cap on per-cycle accel increase
REUSE_GAP_MARGIN = 1.2      # frozen/reused decisions need this envelope margin
HEAVY_STALENESS_CUSHION = 1.0  # extra assumed message age under heavy loss


@dataclass
class ExecCommand:
    at: float
    accel: float


@dataclass(frozen=True)
class PvEstimate:
    pos: float
    speed: float
    staleness: float
    source: str  # selected | neighbor | reconstructed | rollback | cold | reuse
    tick: int | None = None  # sender tick of the message behind the estimate


class PipelineBase:
    """Shared commitment pipeline: anchor tracking, prediction, broadcast.

    Decisions lead execution by mech_delay, so up to ceil(mech_delay/delta)
    accelerations are committed but not yet executing.  Self-prediction walks
    the pending queue, which makes the state at the coming window start exact
    for any mechanical delay.
    """

    def __init__(self, spec: VehicleSpec, offset: float, delta: float,
                 init_state: VehicleState):
        self.spec = spec
        self.offset = offset
        self.delta = delta
        self.anchor = init_state          # state at the last execution boundary
        self.pending: list[tuple[float, float]] = []  # future (start, accel)
        self.last_accel = 0.0
        self.tick_index = 0

    def next_tick(self) -> float:
        return self.offset + self.tick_index * self.delta

    def set_anchor(self, state: VehicleState):
        self.anchor = state
        self.pending = [(te, a) for (te, a) in self.pending if te > state.t + 1e-12]

    def predict_self(self, t: float) -> VehicleState:
        """Own exact state at t, through all committed acceleration switches."""
        st = self.anchor
        accel = st.a
        for te, a_next in self.pending:
            if te >= t - 1e-12:
                break
            st = advance_state(st, accel, te - st.t, self.spec.speed_max)
            accel = a_next
        return advance_state(st, accel, t - st.t, self.spec.speed_max)

    def _commit(self, t0: float, accel: float) -> tuple[ExecCommand, StatusMessage]:
        t_exec = t0 + self.spec.mech_delay
        t1 = t_exec + self.delta
        here = self.predict_self(t_exec)
        pred = advance_state(here, accel, self.delta, self.spec.speed_max)
        msg = StatusMessage(sender=self.spec.id, tick=self.tick_index, sent_at=t0,
                            accel=accel, pred_t=t1, pred_x=pred.x, pred_v=pred.v,
                            mech_delay=self.spec.mech_delay, length=self.spec.length,
                            accel_min=self.spec.accel_min)
        self.pending.append((t_exec, accel))
        self.last_accel = accel
        self.tick_index += 1
        return ExecCommand(t_exec, accel), msg

    def _basic_bounds(self, v: float) -> tuple[float, float]:
        lo = max(self.spec.accel_min, -v / self.delta)
        hi = min(self.spec.accel_max, (self.spec.speed_max - v) / self.delta)
        return lo, hi


class LeaderAgent(PipelineBase):
    """Drives a speed profile through the same commitment pipeline."""

    def __init__(self, spec, offset, delta, init_state, profile):
        super().__init__(spec, offset, delta, init_state)
        self.profile = profile

    def decide(self, t0: float) -> tuple[ExecCommand, StatusMessage]:
        t_exec = t0 + self.spec.mech_delay
        v = self.predict_self(t_exec).v
        accel = self.profile.accel_at(t_exec, v, self.delta)
        _, hi = self._basic_bounds(v)
        accel = min(max(accel, self.spec.accel_min), hi)
        return self._commit(t0, accel)


class FollowerAgent(PipelineBase):
    """Envelope-following controller behind one predecessor."""

    def __init__(self, spec: VehicleSpec, offset: float, delta: float,
                 init_state: VehicleState, link: Link, pv_static: PvStatic,
                 pv_initial_x: float,
                 ablation: AblationFlags = AblationFlags(),
                 exact_max: bool = False,
                 fixed_staleness: float | None = None,
                 pv_lookup: Callable[[float], tuple[float, float]] | None = None,
                 trust_stale: bool = False):
        super().__init__(spec, offset, delta, init_state)
        self.link = link
        self.pv_static = pv_static
        self.pv_initial_x = pv_initial_x
        self.ablation = ablation
        self.exact_max = exact_max
        self.fixed_staleness = fixed_staleness
        self.pv_lookup = pv_lookup
        self.trust_stale = trust_stale
        self.infeasible_count = 0
        self.estimate_sources: dict[str, int] = {}
        self.last_estimate: PvEstimate | None = None
        self._margined_spec = dataclasses.replace(
            spec, stop_gap=REUSE_GAP_MARGIN * spec.stop_gap,
            elastic_coeff=REUSE_GAP_MARGIN * spec.elastic_coeff)
        # the envelope runs on a fixed assumed message age (the worst seen so
        # far, plus a cushion under heavy loss); fresher estimates are rolled
        # back to that age at cruise speed, which lower-bounds every braking
        # hypothesis.  Without this, loss streaks make the information age
        # saw-tooth and followers cycle between catch-up sprints and slams.
        self._age_ratchet = 0.0

    # -- predecessor state estimation ------------------------------------

    def _estimate_pv(self, t0: float, t1: float, heavy: bool) -> PvEstimate:
        if self.fixed_staleness is not None:
            x, v = self.pv_lookup(t1 - self.fixed_staleness)
            return PvEstimate(x, v, self.fixed_staleness, "selected")
        kappa = self.link.select_kappa(t0, heavy)
        if kappa is None:
            if self.link.last_known is None:
                return PvEstimate(self.pv_initial_x, 0.0, 0.0, "cold")
            return self._no_usable(t1)
        target = self.link.tick_of(t0 - kappa)
        msg = self.link.latest_delivered_at_or_before(target)
        if msg is None:
            return self._no_usable(t1)
        source = "selected" if msg.tick == target else "neighbor"
        if msg.pred_t <= t1 + 1e-12:
            return PvEstimate(msg.pred_x, msg.pred_v, max(0.0, t1 - msg.pred_t),
                              source, msg.tick)
        return self._reconstruct(t1, msg.tick, source)

    def _reconstruct(self, t1: float, k_star: int, source: str) -> PvEstimate:
        """State at t1 from messages predicting past t1 (large predecessor delays).

        Walk forward from the newest usable message predicting at or before
        t1; a missing link stops the walk and the remaining age is covered by
        the hard-brake credit.  With no such base, roll the oldest usable
        prediction back through its own execution window; clamping the
        rolled-back speed at 0 only understates the predecessor, never
        overstates it.
        """
        delivered = self.link.delivered
        base = None
        oldest_tick = self.link.oldest_delivered().tick
        for k in range(k_star, oldest_tick - 1, -1):
            m = delivered.get(k)
            if m is not None and m.pred_t <= t1 + 1e-12:
                base = m
                break
        if base is None:
            oldest = delivered[oldest_tick]
            back = oldest.pred_t - t1
            if back <= self.delta + 1e-12:
                x = oldest.pred_x - oldest.pred_v * back + 0.5 * oldest.accel * back * back
                v = oldest.pred_v - oldest.accel * back
                return PvEstimate(x, max(v, 0.0), 0.0, "rollback", oldest.tick)
            return PvEstimate(self.pv_initial_x, 0.0, 0.0, "cold")
        t_b, x_b, v_b = base.pred_t, base.pred_x, base.pred_v
        k = base.tick
        while t_b < t1 - 1e-12:
            nxt = delivered.get(k + 1)
            if nxt is None or nxt.tick > k_star:
                break
            step = min(self.delta, t1 - t_b)
            st = advance_state(VehicleState(t_b, x_b, v_b), nxt.accel, step)
            t_b, x_b, v_b = st.t, st.x, st.v
            if step == self.delta:
                k += 1
        if t_b >= t1 - 1e-12:
            return PvEstimate(x_b, v_b, 0.0, source, base.tick)
        return PvEstimate(x_b, v_b, t1 - t_b, "reconstructed", base.tick)

    def _no_usable(self, t1: float) -> PvEstimate:
        """Nothing at or before the target in the buffer: stale-reuse test input."""
        lk = self.link.last_known
        if lk is None:
            return PvEstimate(self.pv_initial_x, 0.0, 0.0, "cold")
        return PvEstimate(lk.pred_x, lk.pred_v, max(0.0, t1 - lk.pred_t), "reuse",
                          lk.tick)

    # -- the decision tick -------------------------------------------------

    def decide(self, t0: float) -> tuple[ExecCommand, StatusMessage]:
        t_exec = t0 + self.spec.mech_delay
        t1 = t_exec + self.delta
        me = self.predict_self(t_exec)
        heavy = (self.fixed_staleness is None) and self.link.heavy_loss(t0)
        est = self._estimate_pv(t0, t1, heavy)
        self.last_estimate = est
        self.estimate_sources[est.source] = self.estimate_sources.get(est.source, 0) + 1

        if est.source == "reuse":
            accel = self._stale_reuse(me, est)
        else:
            pv_pos, pv_speed = est.pos, max(0.0, est.speed)
            if est.tick is not None and est.tick >= 0:
                floor = est.staleness + (HEAVY_STALENESS_CUSHION if heavy else 0.0) \
                    if est.source == "selected" else est.staleness
                self._age_ratchet = max(self._age_ratchet, floor)
            staleness = max(est.staleness, self._age_ratchet)
            # back-cast the estimate to the assumed age: a cruise rollback
            # covers at least as much ground as any braking hypothesis, so the
            # pseudo-state never overstates the predecessor
            pv_pos -= pv_speed * max(0.0, staleness - est.staleness)
            if self.trust_stale:
                # negative-control mode: dead-reckon the stale state forward at
                # constant speed instead of crediting a possible hard brake
                pv_pos = est.pos + max(0.0, est.speed) * est.staleness
                staleness = 0.0
            inp = DecisionInput(fv=self.spec, pv=self.pv_static,
                                fv_pos=me.x, fv_speed=max(0.0, me.v),
                                pv_pos=pv_pos, pv_speed=pv_speed,
                                staleness=staleness, delta=self.delta)
            if est.source != "selected" and self._frozen_feasible(inp):
                # the wanted message is missing but the running decision still
                # clears the conservative envelope with margin: keep it rather
                # than chatter against a jumping estimate
                accel = self.last_accel
                self.estimate_sources["frozen"] = \
                    self.estimate_sources.get("frozen", 0) + 1
            else:
                dec = decide_accel(inp, self.ablation, self.exact_max)
                if dec.infeasible:
                    self.infeasible_count += 1
                accel = dec.accel
        if heavy:
            # increment limiter: decreases pass through untouched
            cap = self.last_accel + ACCEL_STEP_FRACTION * self.delta * self.spec.accel_max
            accel = min(accel, cap)
        # upper bound only: accels below the standstill floor execute with the
        # exact zero-speed clamp and are always gap-safe
        _, hi = self._basic_bounds(me.v)
        accel = min(accel, hi)
        return self._commit(t0, accel)

    def _frozen_feasible(self, inp: DecisionInput) -> bool:
        """Does the running acceleration clear the full envelope with margin?

        Checked against the conservative estimate with the stop and elastic
        gaps inflated, so a frozen decision is strictly inside the safe set.
        """
        a = self.last_accel
        fs = compute_domains(dataclasses.replace(inp, fv=self._margined_spec))
        if a > fs.start_hi + 1e-12:
            return False
        if fs.end is None or not (fs.end[0] - 1e-12 <= a <= fs.end[1] + 1e-12):
            return False
        if fs.in_tilde(a):
            if fs.mid is None or not (fs.mid[0] - 1e-12 <= a <= fs.mid[1] + 1e-12):
                return False
        return True

    def _stale_reuse(self, me: VehicleState, est: PvEstimate) -> float:
        """Keep the last decision when the conservative gap clearly suffices,
        else brake; applies only when no usable message is buffered."""
        theta = min(est.staleness, est.speed / -self.pv_static.accel_min)
        pv_t1 = est.pos + hard_brake(est.speed, self.pv_static.accel_min, theta).distance
        fv_next = advance_state(me, self.last_accel, self.delta, self.spec.speed_max)
        gap_t1 = pv_t1 - self.pv_static.length - fv_next.x
        needed = REUSE_GAP_MARGIN * elastic_min_gap(self.spec, fv_next.v, self.delta)
        if gap_t1 >= needed:
            return self.last_accel
        self.infeasible_count += 1
        return self.spec.accel_min
