"""Batch experiments: headway-vs-delay surface, RSS baseline comparison,
additional-gap maps, ablation outcomes, and the packet-loss sweep.

The delay surface and the RSS comparison run with the elastic coefficient at
0 and the knowledge delay injected directly as staleness; that combination
reproduces the published efficiency numbers, which the tabulated defaults do
not (see the decision notes shipped with the repository history).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CommConfig
from .engine import ConstantAccel, RunRecord, ScenarioConfig, VehicleInit, metrics, run
from .kinematics import make_spec
from .safety import (AblationFlags, PvStatic, min_feasible_gap, stable_headway)

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class SweepSpec:
    """Grid for the stable-headway surface."""

    delays: tuple[float, ...] = tuple(round(0.1 * k, 3) for k in range(11))
    speeds: tuple[float, ...] = tuple(v * KMH for v in (30, 40, 50, 60, 70, 80, 100, 120))
    pair: tuple[str, str] = ("small", "small")  # (pv class, fv class)
    gamma: float = 0.0
    delta: float = 0.1

    def __post_init__(self):
        if not self.delays or not self.speeds:
            raise ValueError("empty sweep grid")
        if list(self.delays) != sorted(self.delays) or list(self.speeds) != sorted(self.speeds):
            raise ValueError("sweep grids must be sorted")


@dataclass(frozen=True)
class RssParams:
    """Classic minimum-safe-distance parameters (all magnitudes positive).

    The follower is assumed to brake no harder than the weaker vehicle of the
    pair while the leader brakes at its own full rate.
    """

    response_time: float
    accel_resp: float
    brake_min: float
    brake_max: float

    @classmethod
    def for_pair(cls, pv_class: str, fv_class: str, response_time: float = 0.1) -> "RssParams":
        pv = make_spec(0, pv_class)
        fv = make_spec(1, fv_class)
        weaker = min(pv.brake_rate, fv.brake_rate)
        return cls(response_time=response_time, accel_resp=fv.accel_max,
                   brake_min=weaker, brake_max=pv.brake_rate)


def rss_min_distance(v_f: float, v_p: float, params: RssParams) -> float:
    """Worst-case closing distance if the leader brakes hard and the follower
    accelerates through its response time before braking at brake_min."""
    rho = params.response_time
    v_resp = v_f + rho * params.accel_resp
    d = (v_f * rho + 0.5 * params.accel_resp * rho * rho
         + v_resp * v_resp / (2.0 * params.brake_min)
         - v_p * v_p / (2.0 * params.brake_max))
    return max(0.0, d)


def rss_headway(pv_class: str, fv_class: str, v: float,
                response_time: float = 0.1) -> float:
    """Front-to-front time headway of the baseline at equal speeds v."""
    params = RssParams.for_pair(pv_class, fv_class, response_time)
    pv = make_spec(0, pv_class)
    fv = make_spec(1, fv_class)
    d = rss_min_distance(v, v, params)
    return (d + fv.stop_gap + pv.length) / v


def model_headway(pv_class: str, fv_class: str, v: float, staleness: float,
                  gamma: float = 0.0, delta: float = 0.1) -> float:
    """Stable headway of our model at equal speeds v and fixed staleness."""
    fv = make_spec(1, fv_class, elastic_coeff=gamma)
    pv = make_spec(0, pv_class)
    return stable_headway(fv, PvStatic(pv.length, pv.accel_min, pv.mech_delay),
                          v, staleness, delta)


# ---------------------------------------------------------------------------
# headway-vs-delay surface (simulated cells)

def surface_cell(delay: float, v: float, pair: tuple[str, str] = ("small", "small"),
                 gamma: float = 0.0, delta: float = 0.1,
                 duration: float = 120.0) -> float | None:
    """Stable headway of one simulated pair with the delay injected directly.

    Both vehicles cruise at v with aligned decision grids and a loss-free,
    randomness-free channel; the follower starts at the stop gap and opens up
    to its steady-state gap.  None when the stability window never occurs.
    """
    pv = make_spec(0, pair[0], speed_max=v, elastic_coeff=gamma)
    fv = make_spec(1, pair[1], speed_max=v, elastic_coeff=gamma)
    cfg = ScenarioConfig(
        vehicles=[VehicleInit(pv, 0.0, v), VehicleInit(fv, fv.stop_gap, v)],
        leader_profile=ConstantAccel(accel=0.0, v_cap=v),
        comm=CommConfig(delta=delta, loss_rate=0.0),
        duration=duration, seed=1, fixed_staleness=delay, aligned_offsets=True,
        label=f"surface d={delay} v={v:.2f}")
    record = run(cfg)
    if record.collided:
        return None
    pairm = metrics(record).pairs[0]
    return pairm.stable_headway


def headway_delay_surface(spec: SweepSpec = SweepSpec()) -> dict:
    """Surface of stable headways over (delay, speed); rows are speeds."""
    cells = []
    for v in spec.speeds:
        row = [surface_cell(d, v, spec.pair, spec.gamma, spec.delta)
               for d in spec.delays]
        cells.append(row)
    return {"delays": list(spec.delays), "speeds": list(spec.speeds),
            "pair": list(spec.pair), "gamma": spec.gamma, "headway": cells}


def surface_csv(surface: dict) -> str:
    lines = ["v," + ",".join(repr(d) for d in surface["delays"])]
    for v, row in zip(surface["speeds"], surface["headway"]):
        cells = ",".join("nan" if h is None else repr(h) for h in row)
        lines.append(f"{repr(v)},{cells}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# RSS comparison

RSS_PAIRS = (("midsize", "small"), ("large", "small"), ("large", "midsize"))
RSS_MEAN_SPEEDS_KMH = (40, 80, 120)


def rss_compare(pairs=RSS_PAIRS, speeds_kmh=tuple(range(30, 121, 10)),
                staleness: float = 0.1, gamma: float = 0.0) -> dict:
    """Model-vs-baseline headways and improvement ratios per pair and speed."""
    table = []
    for pv_class, fv_class in pairs:
        ours, rss, improv = [], [], []
        for kmh in speeds_kmh:
            v = kmh * KMH
            h_model = model_headway(pv_class, fv_class, v, staleness, gamma)
            h_rss = rss_headway(pv_class, fv_class, v, response_time=staleness)
            ours.append(h_model)
            rss.append(h_rss)
            improv.append(1.0 - h_model / h_rss)
        table.append({"pv": pv_class, "fv": fv_class, "speeds_kmh": list(speeds_kmh),
                      "model": ours, "rss": rss, "improvement": improv})
    means = {}
    for kmh in RSS_MEAN_SPEEDS_KMH:
        if kmh in speeds_kmh:
            j = list(speeds_kmh).index(kmh)
            means[str(kmh)] = float(np.mean([row["improvement"][j] for row in table]))
    return {"staleness": staleness, "gamma": gamma, "pairs": table,
            "mean_improvement": means}


# ---------------------------------------------------------------------------
# additional-gap maps

def additional_gap_map(pv_class: str, fv_class: str, dropped: str,
                       v_grid: tuple[float, ...] = tuple(range(0, 23, 2)),
                       gamma: float = 5.0, staleness: float = 0.0,
                       delta: float = 0.1) -> dict:
    """Gap attributable to one constraint: min gap with all constraints minus
    min gap with that constraint dropped, over (v_pv, v_fv)."""
    fv = make_spec(1, fv_class, elastic_coeff=gamma)
    pv = make_spec(0, pv_class)
    pvs = PvStatic(pv.length, pv.accel_min, pv.mech_delay)
    flags = AblationFlags.drop(dropped)
    rows = []
    for v_p in v_grid:
        row = []
        for v_f in v_grid:
            full = min_feasible_gap(fv, pvs, v_f, v_p, staleness, delta)
            partial = min_feasible_gap(fv, pvs, v_f, v_p, staleness, delta, flags)
            row.append(full - partial)
        rows.append(row)
    return {"pv": pv_class, "fv": fv_class, "dropped": dropped, "gamma": gamma,
            "v_grid": list(v_grid), "additional_gap": rows}


def gap_map_csv(result: dict) -> str:
    lines = ["v_p," + ",".join(repr(float(v)) for v in result["v_grid"])]
    for v_p, row in zip(result["v_grid"], result["additional_gap"]):
        lines.append(f"{repr(float(v_p))}," + ",".join(repr(x) for x in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# packet-loss sweep

def loss_sweep(base: ScenarioConfig, rates=(0.0, 0.01, 0.1, 0.25, 0.5),
               n_seeds: int = 10, seed0: int = 100) -> dict:
    """Re-run one scenario across loss rates and seeds; collect safety and
    comfort summaries per run."""
    runs = []
    for rate in rates:
        for k in range(n_seeds):
            cfg = dataclasses.replace(
                base,
                comm=dataclasses.replace(base.comm, loss_rate=rate),
                seed=seed0 + k,
                label=f"{base.label}+loss={rate}+seed={seed0 + k}")
            record = run(cfg)
            m = metrics(record)
            runs.append({
                "rate": rate, "seed": seed0 + k,
                "collisions": len(record.collisions),
                "min_gap": min(record.min_gaps) if record.min_gaps else None,
                "max_abs_jerk": [max(abs(a), abs(b))
                                 for a, b in zip(m.max_jerk, m.min_jerk)],
            })
    return {"rates": list(rates), "n_seeds": n_seeds, "seed0": seed0,
            "label": base.label, "runs": runs,
            "total_collisions": sum(r["collisions"] for r in runs)}


def to_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
