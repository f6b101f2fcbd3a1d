"""Event-driven platoon engine.

Decisions happen on each vehicle's own grid (offset + k*delta); the decided
acceleration takes effect mech_delay later and runs for one delta.  Between
acceleration changes every trajectory is an exact constant-acceleration
piece, so the bumper-to-bumper gap between neighbours is piecewise quadratic
and collisions are found from quadratic roots rather than sampling.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .agent import FollowerAgent, LeaderAgent
from .channel import CommConfig, Link, StatusMessage, TRACE_HEADER, trace_rows
from .kinematics import (MotionPiece, VehicleSpec, VehicleState, advance_state,
                         make_spec, motion_pieces)
from .safety import AblationFlags, PvStatic

SPEED_TOL = 1e-9

# Stable-window detector: a pair counts as converged wherever, over a full
# window, the speed mismatch and the total gap drift stay below these while
# moving faster than the floor.  The reported stable headway is the tightest
# converged window; slow transients re-converge at larger time headways purely
# through the 1/v factor, so the minimum isolates following performance.
STABLE_WINDOW = 5.0
STABLE_DV = 0.02
STABLE_DGAP = 0.12
STABLE_MIN_SPEED = 5.0


# ---------------------------------------------------------------------------
# leader profiles

class ConstantAccel:
    """Constant acceleration until the profile speed cap."""

    kind = "constant_accel"

    def __init__(self, accel: float, v_cap: float):
        self.accel = accel
        self.v_cap = v_cap

    def accel_at(self, t: float, v: float, delta: float) -> float:
        return min(self.accel, (self.v_cap - v) / delta)

    def fluctuation_window(self):
        return None

    def params(self):
        return {"accel": self.accel, "v_cap": self.v_cap}


class AccelCruiseBrake:
    """Ramp to the cap, cruise, then hard-brake at brake_at."""

    kind = "accel_cruise_brake"

    def __init__(self, accel: float, v_cap: float, brake_at: float):
        self.accel = accel
        self.v_cap = v_cap
        self.brake_at = brake_at

    def accel_at(self, t: float, v: float, delta: float) -> float:
        if t >= self.brake_at:
            return -math.inf  # clipped to the vehicle's hard brake
        return min(self.accel, (self.v_cap - v) / delta)

    def fluctuation_window(self):
        return None

    def params(self):
        return {"accel": self.accel, "v_cap": self.v_cap, "brake_at": self.brake_at}


class Fluctuating:
    """Two ascending speed plateaus, a sinusoid-like fluctuation, a hard brake.

    Phase layout from t=0: ramp to plateau1 at rate1, hold for hold1, ramp to
    plateau2 at rate2, hold for hold2, fluctuate amp*sin around plateau2 for
    cycles periods, then cruise until the hard brake at brake_at.  The slow
    plateau lets weaker-braking pairs settle at their wide gaps; the fast one
    lets the long-vehicle pairs reach their tight headways.
    """

    kind = "fluctuating"

    def __init__(self, plateau1: float = 8.5, rate1: float = 0.5,
                 hold1: float = 45.0, plateau2: float = 12.75,
                 rate2: float = 0.3, hold2: float = 70.0, amp: float = 0.3,
                 period: float = 20.0, cycles: int = 2, brake_at: float = 187.0):
        self.plateau1 = plateau1
        self.rate1 = rate1
        self.hold1 = hold1
        self.plateau2 = plateau2
        self.rate2 = rate2
        self.hold2 = hold2
        self.amp = amp
        self.period = period
        self.cycles = cycles
        self.brake_at = brake_at
        self.t_hold1 = plateau1 / rate1
        self.t_ramp2 = self.t_hold1 + hold1
        self.t_hold2 = self.t_ramp2 + (plateau2 - plateau1) / rate2
        self.t_fluct = self.t_hold2 + hold2
        self.t_cruise = self.t_fluct + cycles * period

    def accel_at(self, t: float, v: float, delta: float) -> float:
        if t >= self.brake_at:
            return -math.inf
        if t < self.t_hold1:
            return min(self.rate1, (self.plateau1 - v) / delta)
        if t < self.t_ramp2:
            return min(0.0, (self.plateau1 - v) / delta)
        if t < self.t_hold2:
            return min(self.rate2, (self.plateau2 - v) / delta)
        if t < self.t_fluct:
            return min(0.0, (self.plateau2 - v) / delta)
        if t < self.t_cruise:
            return self.amp * math.sin(2.0 * math.pi * (t - self.t_fluct) / self.period)
        return min(0.0, (self.plateau2 - v) / delta)

    def fluctuation_window(self):
        return (self.t_fluct, min(self.t_cruise + 5.0, self.brake_at))

    def params(self):
        return {"plateau1": self.plateau1, "rate1": self.rate1,
                "hold1": self.hold1, "plateau2": self.plateau2,
                "rate2": self.rate2, "hold2": self.hold2, "amp": self.amp,
                "period": self.period, "cycles": self.cycles,
                "brake_at": self.brake_at}


PROFILE_KINDS = {c.kind: c for c in (ConstantAccel, AccelCruiseBrake, Fluctuating)}


# ---------------------------------------------------------------------------
# scenario configuration

@dataclass
class VehicleInit:
    spec: VehicleSpec
    gap: float = 0.0    # bumper-to-bumper to the predecessor at t=0 (leader: unused)
    speed: float = 0.0


@dataclass
class ScenarioConfig:
    vehicles: list[VehicleInit]
    leader_profile: object
    comm: CommConfig = field(default_factory=CommConfig)
    duration: float = 60.0
    seed: int = 1
    ablation: AblationFlags = field(default_factory=AblationFlags)
    pass_through: bool = False
    fixed_staleness: float | None = None
    aligned_offsets: bool = False
    exact_max: bool = False
    trust_stale: bool = False
    warm_start: bool = False  # links carry one pre-scenario status message
    label: str = ""

    def __post_init__(self):
        if not self.vehicles:
            raise ValueError("scenario needs at least one vehicle")
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        for v in self.vehicles[1:]:
            if v.gap < 0.0:
                raise ValueError("initial gaps must be non-negative")

    def echo(self) -> dict:
        return {
            "label": self.label,
            "vehicles": [{"class": v.spec.vclass, "gap": v.gap, "speed": v.speed,
                          "speed_max": v.spec.speed_max, "stop_gap": v.spec.stop_gap,
                          "elastic_coeff": v.spec.elastic_coeff}
                         for v in self.vehicles],
            "leader": {"profile": self.leader_profile.kind,
                       **self.leader_profile.params()},
            "comm": {"delta": self.comm.delta, "tau_min": self.comm.tau_min,
                     "tau_max": self.comm.tau_max, "loss_rate": self.comm.loss_rate,
                     "decision_delay": self.comm.decision_delay,
                     "extra_cycles": self.comm.extra_cycles},
            "run": {"duration": self.duration, "seed": self.seed,
                    "pass_through": self.pass_through, "warm_start": self.warm_start,
                    "drop": self._dropped(), "fixed_staleness": self.fixed_staleness},
        }

    def _dropped(self):
        a = self.ablation
        return ("start" if a.drop_start else
                "end" if a.drop_end else
                "mid" if a.drop_mid else None)


@dataclass
class CollisionEvent:
    t: float
    pair: tuple[int, int]   # (pv index, fv index)
    penetration: float      # max overlap depth over the episode


@dataclass
class RunRecord:
    config: ScenarioConfig
    sample_t: np.ndarray                 # global delta grid
    samples: list[dict]                  # per vehicle: arrays x, v, a on the grid
    event_rows: list[tuple]              # (t, veh, x, v, a) at accel-change instants
    collisions: list[CollisionEvent]
    min_gaps: list[float]                # per pair (exact, from quadratic pieces)
    infeasible_counts: list[int]
    estimate_sources: list[dict]
    truncated_at: float | None
    trace: list[str]

    @property
    def collided(self) -> bool:
        return bool(self.collisions)


# ---------------------------------------------------------------------------
# engine internals

_EXEC, _ARRIVE, _DECIDE = 0, 1, 2


class _Vehicle:
    def __init__(self, idx: int, spec: VehicleSpec, state: VehicleState):
        self.idx = idx
        self.spec = spec
        self.state = state            # at the last processed accel change
        self.pieces: list[MotionPiece] = []
        self.agent = None

    def advance_to(self, t: float, new_accel: float | None):
        if t > self.state.t:
            parts = motion_pieces(self.state, self.state.a, t - self.state.t,
                                  self.spec.speed_max)
            self.pieces.extend(parts)
            last = parts[-1]
            x, v = last.pos_at(t), last.speed_at(t)
            if v < -SPEED_TOL or v > self.spec.speed_max + 1e-6:
                raise RuntimeError(f"vehicle {self.idx}: speed {v} out of range at t={t}")
            self.state = VehicleState(t, x, max(v, 0.0),
                                      self.state.a if new_accel is None else new_accel)
        elif new_accel is not None:
            self.state = VehicleState(self.state.t, self.state.x, self.state.v, new_accel)


def _pair_min_gap(pv: list[MotionPiece], fv: list[MotionPiece], lp: float,
                  t_end: float) -> tuple[float, float | None]:
    """Exact minimum gap and first zero-crossing time over overlapping pieces."""
    min_gap = math.inf
    first_cross = None
    i = j = 0
    while i < len(pv) and j < len(fv):
        a = max(pv[i].t0, fv[j].t0)
        b = min(pv[i].t1, fv[j].t1, t_end)
        if b > a + 1e-15:
            p, f = pv[i], fv[j]
            # local quadratic on tau in [0, b - a]
            c2 = 0.5 * (p.a - f.a)
            c1 = p.speed_at(a) - f.speed_at(a)
            c0 = p.pos_at(a) - lp - f.pos_at(a)
            span = b - a
            lo = min(c0, c2 * span * span + c1 * span + c0)
            if c2 > 0.0:
                tv = -c1 / (2.0 * c2)
                if 0.0 < tv < span:
                    lo = min(lo, c2 * tv * tv + c1 * tv + c0)
            min_gap = min(min_gap, lo)
            if lo < 0.0 and first_cross is None:
                first_cross = a + _first_root(c2, c1, c0, span)
        if pv[i].t1 <= fv[j].t1:
            i += 1
        else:
            j += 1
    return min_gap, first_cross


def _first_root(c2: float, c1: float, c0: float, span: float) -> float:
    """Earliest tau in [0, span] where the quadratic goes non-positive."""
    if c0 <= 0.0:
        return 0.0
    if abs(c2) < 1e-15:
        return -c0 / c1 if c1 < 0.0 else span
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0.0:
        return span
    r = math.sqrt(disc)
    roots = sorted(((-c1 - r) / (2.0 * c2), (-c1 + r) / (2.0 * c2)))
    for t in roots:
        if -1e-12 <= t <= span:
            return max(t, 0.0)
    return span


def run(config: ScenarioConfig) -> RunRecord:
    """Simulate one scenario deterministically."""
    n = len(config.vehicles)
    delta = config.comm.delta
    specs = [v.spec for v in config.vehicles]

    # initial positions: leader front at 0, each follower behind its gap
    states = []
    x = 0.0
    for i, vi in enumerate(config.vehicles):
        if i > 0:
            x = states[-1].x - config.vehicles[i - 1].spec.length - vi.gap
        states.append(VehicleState(0.0, x, vi.speed, 0.0))

    if config.aligned_offsets:
        offsets = [0.0] * n
    else:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
        offsets = [0.0] + list(rng.random(n - 1) * delta)

    vehicles = [_Vehicle(i, specs[i], states[i]) for i in range(n)]
    links: list[Link | None] = [None] * n
    for i in range(1, n):
        link_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1000 + i]))
        links[i] = Link(config.comm, link_rng, offsets[i - 1], offsets[i])
        if config.warm_start:
            # a platoon already formed at speed has been communicating: seed
            # the link with the predecessor's state as a pre-scenario message
            pv = specs[i - 1]
            hello = StatusMessage(sender=pv.id, tick=-1,
                                  sent_at=offsets[i - 1] - delta, accel=0.0,
                                  pred_t=0.0, pred_x=states[i - 1].x,
                                  pred_v=states[i - 1].v,
                                  mech_delay=pv.mech_delay, length=pv.length,
                                  accel_min=pv.accel_min)
            links[i].deliver(hello, 0.0)

    def lookup(idx):
        # Trajectory evaluator for the fixed-staleness mode: past times come
        # from the recorded pieces, future times extrapolate the acceleration
        # currently in force (exact while that accel persists, e.g. for a
        # constant-speed leader), and pre-scenario times extend the initial
        # cruise backwards.
        def at(t: float) -> tuple[float, float]:
            veh = vehicles[idx]
            st = veh.state
            if t >= st.t:
                fut = advance_state(st, st.a, t - st.t, specs[idx].speed_max)
                return fut.x, fut.v
            for p in reversed(veh.pieces):
                if p.t0 <= t + 1e-12:
                    return p.pos_at(t), max(0.0, p.speed_at(t))
            v0 = config.vehicles[idx].speed
            return states[idx].x + v0 * t, v0
        return at

    vehicles[0].agent = LeaderAgent(specs[0], offsets[0], delta, states[0],
                                    config.leader_profile)
    for i in range(1, n):
        pv = specs[i - 1]
        vehicles[i].agent = FollowerAgent(
            specs[i], offsets[i], delta, states[i], links[i],
            PvStatic(length=pv.length, accel_min=pv.accel_min, mech_delay=pv.mech_delay),
            pv_initial_x=states[i - 1].x,
            ablation=config.ablation, exact_max=config.exact_max,
            fixed_staleness=config.fixed_staleness,
            pv_lookup=lookup(i - 1) if config.fixed_staleness is not None else None,
            trust_stale=config.trust_stale)

    # event queue: (time, priority, vehicle, seq, payload)
    heap: list = []
    seq = 0
    for i in range(n):
        heapq.heappush(heap, (offsets[i], _DECIDE, i, seq, None))
        seq += 1

    duration = config.duration
    while heap:
        t, prio, i, _, payload = heapq.heappop(heap)
        if t > duration:
            break
        veh = vehicles[i]
        if prio == _EXEC:
            veh.advance_to(t, payload)
            veh.agent.set_anchor(veh.state)
        elif prio == _ARRIVE:
            links[i].deliver(payload, t)
        else:  # decide
            cmd, msg = veh.agent.decide(t)
            heapq.heappush(heap, (cmd.at, _EXEC, i, seq, cmd.accel)); seq += 1
            heapq.heappush(heap, (t + delta, _DECIDE, i, seq, None)); seq += 1
            if i + 1 < n:
                arrival = links[i + 1].transmit(msg)
                if arrival is not None:
                    heapq.heappush(heap, (arrival, _ARRIVE, i + 1, seq, msg)); seq += 1

    for veh in vehicles:
        veh.advance_to(duration, None)

    # exact collision scan per pair
    def scan(t_limit):
        found, gaps = [], []
        for i in range(1, n):
            gap_min, cross = _pair_min_gap(vehicles[i - 1].pieces, vehicles[i].pieces,
                                           specs[i - 1].length, t_limit)
            gaps.append(gap_min)
            if cross is not None:
                found.append(CollisionEvent(t=cross, pair=(i - 1, i),
                                            penetration=max(0.0, -gap_min)))
        return found, gaps

    collisions, min_gaps = scan(duration)
    truncated_at = None
    t_end = duration
    if collisions and not config.pass_through:
        truncated_at = min(c.t for c in collisions)
        t_end = truncated_at
        collisions, min_gaps = scan(t_end)  # report only up to the halt

    # sampling on the global grid plus accel-change event rows
    nsteps = int(math.floor(t_end / delta + 1e-9))
    grid = np.arange(nsteps + 1) * delta
    samples = []
    event_rows: list[tuple] = []
    for veh in vehicles:
        xs, vs, accs = _sample(veh.pieces, grid)
        samples.append({"x": xs, "v": vs, "a": accs})
        for p in veh.pieces:
            if p.t0 <= t_end:
                event_rows.append((p.t0, veh.idx, p.x0, p.v0, p.a))
    event_rows.sort(key=lambda r: (r[0], r[1]))

    trace = []
    for i in range(1, n):
        trace.extend(trace_rows(links[i]))

    return RunRecord(
        config=config, sample_t=grid, samples=samples, event_rows=event_rows,
        collisions=sorted(collisions, key=lambda c: c.t),
        min_gaps=min_gaps,
        infeasible_counts=[0] + [vehicles[i].agent.infeasible_count for i in range(1, n)],
        estimate_sources=[{}] + [vehicles[i].agent.estimate_sources for i in range(1, n)],
        truncated_at=truncated_at, trace=trace)


def _sample(pieces: list[MotionPiece], grid: np.ndarray):
    xs = np.empty(len(grid))
    vs = np.empty(len(grid))
    accs = np.empty(len(grid))
    k = 0
    for j, t in enumerate(grid):
        while k + 1 < len(pieces) and pieces[k].t1 <= t + 1e-12:
            k += 1
        p = pieces[k] if pieces else MotionPiece(0, 0, 0, 0, 0)
        xs[j] = p.pos_at(t)
        vs[j] = p.speed_at(t)
        accs[j] = p.a
    return xs, vs, accs


# ---------------------------------------------------------------------------
# metrics

@dataclass
class PairMetrics:
    stable_headway: float | None
    stable_speed: float | None
    converged_at: float | None
    min_gap: float
    space_headway: float | None


@dataclass
class RunMetrics:
    max_jerk: list[float]
    min_jerk: list[float]
    pairs: list[PairMetrics]
    string_p2p: list[float] | None
    fluct_window: tuple[float, float] | None


def metrics(record: RunRecord) -> RunMetrics:
    cfg = record.config
    delta = cfg.comm.delta
    n = len(cfg.vehicles)
    t = record.sample_t

    # jerk from realized motion: the commanded accel overstates the change at
    # a standstill clamp, where the vehicle stops without physically jerking
    max_jerk, min_jerk = [], []
    for s in record.samples:
        realized = np.diff(s["v"]) / delta
        jerk = np.diff(realized) / delta
        if len(jerk) == 0:
            jerk = np.zeros(1)
        max_jerk.append(float(jerk.max()))
        min_jerk.append(float(jerk.min()))

    window = max(int(round(STABLE_WINDOW / delta)), 1)
    pairs = []
    for i in range(1, n):
        pv, fv = record.samples[i - 1], record.samples[i]
        length = cfg.vehicles[i - 1].spec.length
        gap = pv["x"] - length - fv["x"]
        dv = np.abs(fv["v"] - pv["v"])
        stable_h = stable_v = conv_t = space_h = None
        if len(t) > window:
            ok = np.ones(len(t) - window, dtype=bool)
            for j in range(window + 1):
                seg_v = dv[j:j + len(ok)]
                ok &= seg_v < STABLE_DV
                ok &= fv["v"][j:j + len(ok)] > STABLE_MIN_SPEED
            gmax = np.full(len(ok), -np.inf)
            gmin = np.full(len(ok), np.inf)
            for j in range(window + 1):
                seg_g = gap[j:j + len(ok)]
                gmax = np.maximum(gmax, seg_g)
                gmin = np.minimum(gmin, seg_g)
            ok &= (gmax - gmin) < STABLE_DGAP
            for k in np.nonzero(ok)[0]:
                seg = slice(k, k + window + 1)
                head = float(((gap[seg] + length) / fv["v"][seg]).mean())
                if stable_h is None or head < stable_h:
                    stable_h = head
                    stable_v = float(fv["v"][seg].mean())
                    space_h = float(gap[seg].mean() + length)
                    conv_t = float(t[k + window])
        pairs.append(PairMetrics(stable_headway=stable_h, stable_speed=stable_v,
                                 converged_at=conv_t, min_gap=record.min_gaps[i - 1],
                                 space_headway=space_h))

    fluct = cfg.leader_profile.fluctuation_window()
    string_p2p = None
    if fluct is not None:
        lo, hi = fluct
        mask = ((t >= lo) & (t <= hi))[1:]
        if mask.any():
            string_p2p = [float(np.ptp((np.diff(s["v"]) / delta)[mask]))
                          for s in record.samples]
    return RunMetrics(max_jerk=max_jerk, min_jerk=min_jerk, pairs=pairs,
                      string_p2p=string_p2p, fluct_window=fluct)


# ---------------------------------------------------------------------------
# artifact writers (deterministic byte-for-byte given identical records)

CSV_HEADER = "t,veh_id,x,v,a,gap,headway"


def timeseries_csv(record: RunRecord) -> str:
    cfg = record.config
    n = len(cfg.vehicles)
    lines = [CSV_HEADER]
    for j, t in enumerate(record.sample_t):
        for i in range(n):
            s = record.samples[i]
            if i == 0:
                gap_s = head_s = ""
            else:
                gap = record.samples[i - 1]["x"][j] - cfg.vehicles[i - 1].spec.length \
                    - s["x"][j]
                gap_s = repr(float(gap))
                head_s = repr(float((gap + cfg.vehicles[i - 1].spec.length) / s["v"][j])) \
                    if s["v"][j] > SPEED_TOL else "inf"
            lines.append(f"{repr(float(t))},{i},{repr(float(s['x'][j]))},"
                         f"{repr(float(s['v'][j]))},{repr(float(s['a'][j]))},"
                         f"{gap_s},{head_s}")
    for (te, i, xe, ve, ae) in record.event_rows:
        lines.append(f"{repr(float(te))},{i},{repr(float(xe))},{repr(float(ve))},"
                     f"{repr(float(ae))},,")
    return "\n".join(lines) + "\n"


def summary_dict(record: RunRecord) -> dict:
    m = metrics(record)
    return {
        "config": record.config.echo(),
        "collisions": [{"t": c.t, "pair": list(c.pair), "penetration": c.penetration}
                       for c in record.collisions],
        "truncated_at": record.truncated_at,
        "min_gaps": record.min_gaps,
        "infeasible_counts": record.infeasible_counts,
        "metrics": {
            "max_jerk": m.max_jerk,
            "min_jerk": m.min_jerk,
            "pairs": [{"stable_headway": p.stable_headway,
                       "stable_speed": p.stable_speed,
                       "converged_at": p.converged_at,
                       "min_gap": p.min_gap,
                       "space_headway": p.space_headway} for p in m.pairs],
            "string_p2p": m.string_p2p,
            "fluct_window": list(m.fluct_window) if m.fluct_window else None,
        },
    }


def summary_json(record: RunRecord) -> str:
    return json.dumps(summary_dict(record), indent=2, sort_keys=True) + "\n"
