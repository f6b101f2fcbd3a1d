"""Conservative hard-brake safety envelope and the per-cycle acceleration decision.

The follower picks one acceleration per communication cycle delta, executed
over (t1 - delta, t1].  Safety is judged against the worst case in which the
predecessor brakes hard from tK (the time of its last usable status, t1 -
staleness) and the follower brakes hard from t1.  Requiring the bumper gap to
stay above the elastic minimum gap

    S = elastic_coeff * delta * v_follower(t1) + stop_gap

over the whole braking episode is equivalent to three closed-form conditions
on the decided acceleration a:

  start point   a <= 2 G / ((2g+1) delta^2)                  (gap at t1)
  end point     a^2 + alpha1 a + alpha2 <= 0                  (gap at full stop)
  midway point  a^2 + beta1 a + beta2 <= 0, gated on the      (interior minimum,
                open interval where an interior extremum       only when the
                of the approach distance exists)               follower stops first)

with G the conservative spacing margin at t1 (predecessor credited with its
hard-brake motion over theta = min(staleness, stop time)).  The decision rule
takes the maximum acceleration of the basic-bounds intersection with the
start/end constraints; if that value admits an interior extremum the midway
constraint is intersected as well.  An empty intersection flags infeasibility
and falls back to the strongest admissible braking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .kinematics import VehicleSpec, hard_brake

TOL = 1e-9


@dataclass(frozen=True)
class PvStatic:
    """Static knowledge about the predecessor carried in every status message."""

    length: float
    accel_min: float
    mech_delay: float = 0.0


@dataclass(frozen=True)
class DecisionInput:
    """Everything the follower knows when deciding the accel for (t1-delta, t1].

    fv_pos/fv_speed are the follower's own (exactly predictable) state at
    t1 - delta; pv_pos/pv_speed are the predecessor state at tK = t1 -
    staleness, taken from the selected status message.
    """

    fv: VehicleSpec
    pv: PvStatic
    fv_pos: float
    fv_speed: float
    pv_pos: float
    pv_speed: float
    staleness: float
    delta: float

    def __post_init__(self):
        if self.staleness < 0.0:
            raise ValueError(f"negative staleness {self.staleness}")
        if self.delta <= 0.0:
            raise ValueError(f"non-positive delta {self.delta}")
        if self.fv_speed < 0.0 or self.pv_speed < 0.0:
            raise ValueError("negative speed in decision input")

    @property
    def theta(self) -> float:
        """Conservative predecessor braking time between tK and t1."""
        return min(self.staleness, self.pv_speed / -self.pv.accel_min)


@dataclass(frozen=True)
class AblationFlags:
    """Replace individual safety constraints with the whole real line."""

    drop_start: bool = False
    drop_end: bool = False
    drop_mid: bool = False

    @classmethod
    def drop(cls, name: str | None) -> "AblationFlags":
        if name is None:
            return cls()
        key = {"start": "drop_start", "end": "drop_end", "mid": "drop_mid",
               "midway": "drop_mid"}.get(name)
        if key is None:
            raise ValueError(f"unknown constraint name {name!r}")
        return cls(**{key: True})


@dataclass(frozen=True)
class FeasibleSet:
    """Closed-form acceleration domains for one decision.

    basic is the accel/speed-bound interval (always nonempty).  start_hi is
    the upper bound from the gap-at-t1 condition.  end is the root interval
    of the full-stop quadratic (None when its discriminant is negative).
    tilde is the open interval of accelerations for which an interior
    extremum of the approach distance exists; mid is the root interval of the
    interior-extremum quadratic (unconstrained unless tilde applies).
    """

    basic: tuple[float, float]
    start_hi: float
    end: tuple[float, float] | None
    tilde: tuple[float, float]
    mid: tuple[float, float] | None
    alpha1: float = 0.0
    alpha2: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0

    def in_tilde(self, a: float) -> bool:
        """Membership in the open existence interval, boundary counted inside."""
        lo, hi = self.tilde
        return lo - TOL < a < hi + TOL


@dataclass(frozen=True)
class Decision:
    accel: float
    infeasible: bool
    feasible: FeasibleSet


def elastic_min_gap(spec: VehicleSpec, v_t1: float, delta: float) -> float:
    """Speed-proportional minimum gap: elastic_coeff * delta * v + stop_gap."""
    return spec.elastic_coeff * delta * v_t1 + spec.stop_gap


def _root_interval(c1: float, c2: float) -> tuple[float, float] | None:
    """Solution interval of a^2 + c1 a + c2 <= 0, None when empty."""
    disc = c1 * c1 - 4.0 * c2
    if disc < 0.0:
        return None
    r = math.sqrt(disc)
    return ((-c1 - r) / 2.0, (-c1 + r) / 2.0)


def spacing_margin(inp: DecisionInput) -> float:
    """Conservative spacing margin G at t1 (before the accel-dependent part).

    G = x_pv(tK) + braked motion over theta - x_fv(t1-delta)
        - (g+1) v_fv delta - length_pv - stop_gap_fv
    """
    g = inp.fv.elastic_coeff
    theta = inp.theta
    pv_adv = inp.pv_speed * theta + 0.5 * inp.pv.accel_min * theta * theta
    return (inp.pv_pos + pv_adv - inp.fv_pos
            - (g + 1.0) * inp.fv_speed * inp.delta - inp.pv.length - inp.fv.stop_gap)


def domain_basic(inp: DecisionInput) -> tuple[float, float]:
    """Acceleration/speed bounds: never drives the speed below 0 or above the cap."""
    d = inp.delta
    lo = max(inp.fv.accel_min, -inp.fv_speed / d)
    hi = min(inp.fv.accel_max, (inp.fv.speed_max - inp.fv_speed) / d)
    return lo, hi


def domain_start_point(inp: DecisionInput) -> float:
    """Upper accel bound keeping the gap at t1 above the elastic minimum gap."""
    g = inp.fv.elastic_coeff
    return 2.0 * spacing_margin(inp) / ((2.0 * g + 1.0) * inp.delta * inp.delta)


def _end_coeffs(inp: DecisionInput) -> tuple[float, float]:
    g = inp.fv.elastic_coeff
    d = inp.delta
    bf, bp = inp.fv.accel_min, inp.pv.accel_min
    w = inp.pv_speed + bp * inp.theta  # predecessor speed at t1 under hard braking
    alpha1 = 2.0 * inp.fv_speed / d - (2.0 * g + 1.0) * bf
    alpha2 = (inp.fv_speed ** 2 / d ** 2
              - (bf / bp) * w * w / d ** 2
              + 2.0 * bf / d ** 2 * spacing_margin(inp))
    return alpha1, alpha2


def domain_end_point(inp: DecisionInput) -> tuple[float, float] | None:
    """Accel interval keeping the full-stop gap above the elastic minimum gap."""
    return _root_interval(*_end_coeffs(inp))


def _tilde_interval(inp: DecisionInput) -> tuple[float, float]:
    """Open accel interval where an interior extremum of the approach exists.

    Exists only when the follower is faster at t1 than the (hard-braked)
    predecessor yet stops earlier; empty by construction when the braking
    rates are equal (the bounds coincide).
    """
    d = inp.delta
    bf, bp = inp.fv.accel_min, inp.pv.accel_min
    w = inp.pv_speed + bp * inp.theta
    lo = (w - inp.fv_speed) / d
    hi = ((bf / bp) * w - inp.fv_speed) / d
    return lo, hi


def _mid_coeffs(inp: DecisionInput) -> tuple[float, float]:
    g = inp.fv.elastic_coeff
    d = inp.delta
    bf, bp = inp.fv.accel_min, inp.pv.accel_min
    w = inp.pv_speed + bp * inp.theta
    beta1 = 2.0 / d * (inp.fv_speed - w) + (2.0 * g + 1.0) * (bp - bf)
    beta2 = ((w - inp.fv_speed) ** 2 / d ** 2
             - 2.0 * (bp - bf) / d ** 2 * spacing_margin(inp))
    return beta1, beta2


def domain_midway(inp: DecisionInput) -> tuple[tuple[float, float],
                                               tuple[float, float] | None]:
    """Existence interval and constraint interval of the midway condition."""
    return _tilde_interval(inp), _root_interval(*_mid_coeffs(inp))


def compute_domains(inp: DecisionInput, ablation: AblationFlags = AblationFlags()) -> FeasibleSet:
    basic = domain_basic(inp)
    start_hi = math.inf if ablation.drop_start else domain_start_point(inp)
    end = (-math.inf, math.inf) if ablation.drop_end else domain_end_point(inp)
    a1, a2 = _end_coeffs(inp)
    b1, b2 = _mid_coeffs(inp)
    if ablation.drop_mid:
        tilde = (math.inf, -math.inf)  # empty: midway branch never taken
        mid = (-math.inf, math.inf)
    else:
        tilde = _tilde_interval(inp)
        mid = _root_interval(b1, b2)
    return FeasibleSet(basic=basic, start_hi=start_hi, end=end, tilde=tilde, mid=mid,
                       alpha1=a1, alpha2=a2, beta1=b1, beta2=b2)


def fallback_accel(inp: DecisionInput) -> float:
    """Infeasible-set fallback: brake at the full hard rate.

    The executed motion clamps exactly at standstill, so committing the raw
    hard brake never reverses the vehicle while keeping the realized stop on
    the envelope's assumed braking curve; flooring at -v/delta instead would
    overtravel that curve by up to |accel_min| delta^2 / 8 at crawl speeds.
    """
    return inp.fv.accel_min


def decide_accel(inp: DecisionInput, ablation: AblationFlags = AblationFlags(),
                 exact_max: bool = False) -> Decision:
    """Pick the maximum safe acceleration for the coming execution window.

    Follows the published rule: a_a maximizes basic+start+end; if a_a lies in
    the existence interval the midway constraint is intersected and a_b is
    returned instead.  exact_max additionally considers accelerations just
    below the existence interval (where no interior extremum exists), which
    can exceed a_b; the published rule does not.
    """
    fs = compute_domains(inp, ablation)
    lo, hi = fs.basic
    hi = min(hi, fs.start_hi)
    if fs.end is None:
        return Decision(fallback_accel(inp), True, fs)
    lo_a = max(lo, fs.end[0])
    hi_a = min(hi, fs.end[1])
    if hi_a < lo_a - TOL:
        return Decision(fallback_accel(inp), True, fs)
    a_a = hi_a
    if not fs.in_tilde(a_a):
        return Decision(a_a, False, fs)
    # a_a admits an interior extremum: add the midway constraint.
    t_lo, t_hi = fs.tilde
    if fs.mid is None:
        lo_b, hi_b = math.inf, -math.inf
    else:
        lo_b = max(lo_a, t_lo, fs.mid[0])
        hi_b = min(hi_a, t_hi, fs.mid[1])
    candidates = []
    if hi_b >= lo_b - TOL:
        candidates.append(hi_b)
    if exact_max and lo_a <= t_lo:
        # Accels at or below the existence interval have no interior extremum.
        candidates.append(min(hi_a, t_lo))
    if not candidates:
        return Decision(fallback_accel(inp), True, fs)
    return Decision(max(candidates), False, fs)


def conservative_approach_distance(inp: DecisionInput, fv_accel: float,
                                   t_rel: float) -> float:
    """Approach distance at t1 + t_rel if both vehicles brake hard.

    The follower runs fv_accel over (t1-delta, t1] then brakes; the
    predecessor is credited with hard braking since tK, so only its motion
    past t1 counts.  Positive values mean the gap shrank since t1.
    """
    if t_rel < 0.0:
        raise ValueError(f"negative t_rel {t_rel}")
    v_t1 = max(0.0, inp.fv_speed + fv_accel * inp.delta)
    fv = hard_brake(v_t1, inp.fv.accel_min, t_rel).distance
    pv_from_tk = hard_brake(inp.pv_speed, inp.pv.accel_min, inp.staleness + t_rel).distance
    pv_to_t1 = hard_brake(inp.pv_speed, inp.pv.accel_min, inp.staleness).distance
    return fv - (pv_from_tk - pv_to_t1)


def cruise_input(fv: VehicleSpec, pv: PvStatic, v_f: float, v_p: float,
                 staleness: float, gap: float, delta: float) -> DecisionInput:
    """DecisionInput for a steady car-following snapshot.

    gap is the simultaneous bumper-to-bumper gap at the follower's state time
    t1 - delta; the cruising predecessor's position is carried to tK = t1 -
    staleness at constant speed, which is exactly what a status message
    would report in this situation.
    """
    pv_pos = gap + pv.length + v_p * (delta - staleness)
    return DecisionInput(fv=fv, pv=pv, fv_pos=0.0, fv_speed=v_f,
                         pv_pos=pv_pos, pv_speed=v_p,
                         staleness=staleness, delta=delta)


def min_feasible_gap(fv: VehicleSpec, pv: PvStatic, v_f: float, v_p: float,
                     staleness: float = 0.0, delta: float = 0.1,
                     ablation: AblationFlags = AblationFlags(),
                     tol: float = 1e-4) -> float:
    """Smallest steady-state gap at which some acceleration is feasible.

    Feasibility means the true constraint set admits an acceleration (an
    accel outside the interior-extremum interval needs no midway condition),
    which is monotone in the gap, so bisection applies.  Returns 0 when even
    contact admits a feasible braking acceleration.
    """
    def feasible(gap: float) -> bool:
        inp = cruise_input(fv, pv, v_f, v_p, staleness, gap, delta)
        return not decide_accel(inp, ablation, exact_max=True).infeasible

    lo = 0.0
    hi = 10.0 * (v_f * v_f / (2.0 * fv.brake_rate)
                 + v_f * (staleness + delta) + pv.length + fv.stop_gap) + 1.0
    if feasible(lo):
        return 0.0
    if not feasible(hi):
        raise RuntimeError("min_feasible_gap bracket too small")
    while hi - lo > tol:
        midpoint = 0.5 * (lo + hi)
        if feasible(midpoint):
            hi = midpoint
        else:
            lo = midpoint
    return hi


def equilibrium_gap(fv: VehicleSpec, pv: PvStatic, v: float,
                    staleness: float = 0.0, delta: float = 0.1,
                    tol: float = 1e-6) -> float:
    """Steady-following gap: where the chosen acceleration crosses zero.

    Both vehicles cruise at v; the follower's speed cap is ignored so the
    decision reflects the safety envelope alone.  This is the gap a simulated
    pair converges to, and (gap + pv.length) / v its stable time headway.
    """
    uncapped = fv if fv.speed_max == math.inf else \
        VehicleSpec(id=fv.id, vclass=fv.vclass, length=fv.length, stop_gap=fv.stop_gap,
                    accel_max=fv.accel_max, accel_min=fv.accel_min,
                    mech_delay=fv.mech_delay, speed_max=math.inf,
                    elastic_coeff=fv.elastic_coeff)

    def chosen(gap: float) -> float:
        inp = cruise_input(uncapped, pv, v, v, staleness, gap, delta)
        dec = decide_accel(inp)
        return -math.inf if dec.infeasible else dec.accel

    lo = 0.0
    hi = 10.0 * (v * v / (2.0 * fv.brake_rate) + v * (staleness + delta)
                 + pv.length + fv.stop_gap) + 1.0
    if chosen(lo) >= 0.0:
        return 0.0
    while hi - lo > tol:
        midpoint = 0.5 * (lo + hi)
        if chosen(midpoint) >= 0.0:
            hi = midpoint
        else:
            lo = midpoint
    return hi


def stable_headway(fv: VehicleSpec, pv: PvStatic, v: float,
                   staleness: float = 0.0, delta: float = 0.1) -> float:
    """Front-to-front time headway at the steady-following gap."""
    gap = equilibrium_gap(fv, pv, v, staleness, delta)
    return (gap + pv.length) / v
