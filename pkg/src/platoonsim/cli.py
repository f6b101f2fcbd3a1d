"""Command-line front end.

Exit codes: 0 success, 2 a collision halted a run, 3 scenario/argument
validation error.  All randomness flows from the scenario seed, so repeated
invocations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import analysis
from .channel import TRACE_HEADER
from .engine import ScenarioConfig, run, summary_json, timeseries_csv
from .safety import AblationFlags
from .scenario import ScenarioError, load_preset, load_scenario, preset_names

EXIT_OK = 0
EXIT_COLLISION = 2
EXIT_INVALID = 3


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("PLATOONSIM_OUT", "out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> ScenarioConfig:
    name = args.scenario
    if name.endswith(".scn") or name.endswith(".json") or os.path.exists(name):
        return load_scenario(name)
    return load_preset(name)


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "drop", None):
        cfg = dataclasses.replace(cfg, ablation=AblationFlags.drop(args.drop))
    if getattr(args, "pass_through", None) is not None:
        cfg = dataclasses.replace(cfg, pass_through=args.pass_through)
    return cfg


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _run_and_emit(cfg: ScenarioConfig, out: Path, stem: str, trace: bool) -> int:
    record = run(cfg)
    _write(out / f"{stem}_timeseries.csv", timeseries_csv(record))
    _write(out / f"{stem}_summary.json", summary_json(record))
    if trace:
        _write(out / f"{stem}_channel_trace.csv",
               TRACE_HEADER + "\n" + "\n".join(record.trace) + "\n")
    if record.collisions:
        first = record.collisions[0]
        print(f"collision: t={first.t:.3f}s pair={first.pair} "
              f"min_gap={min(record.min_gaps):.3f}m")
        if not cfg.pass_through:
            return EXIT_COLLISION
    else:
        print(f"no collisions; min gap {min(record.min_gaps):.3f} m"
              if record.min_gaps else "single vehicle run")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _apply_overrides(_load(args), args)
    return _run_and_emit(cfg, _out_dir(args), Path(cfg.label or "run").stem, args.trace)


def cmd_ablation(args) -> int:
    cfg = _apply_overrides(_load(args), args)
    stem = f"{Path(cfg.label or 'run').stem}_drop_{args.drop or 'none'}"
    return _run_and_emit(cfg, _out_dir(args), stem, False)


def cmd_sweep_headway(args) -> int:
    spec = analysis.SweepSpec(
        delays=tuple(float(x) for x in args.delays.split(",")),
        speeds=tuple(float(x) / 3.6 for x in args.speeds.split(",")),
        gamma=args.gamma)
    surface = analysis.headway_delay_surface(spec)
    out = _out_dir(args)
    _write(out / "headway_surface.csv", analysis.surface_csv(surface))
    _write(out / "headway_surface.json", analysis.to_json(surface))
    flat = [h for row in surface["headway"] for h in row if h is not None]
    print(f"{len(flat)} converged cells; headway range "
          f"[{min(flat):.3f}, {max(flat):.3f}] s")
    return EXIT_OK


def cmd_gap_map(args) -> int:
    try:
        pv_class, fv_class = args.pair.split(":")
    except ValueError:
        print("--pair must look like midsize:small", file=sys.stderr)
        return EXIT_INVALID
    grid = tuple(float(x) for x in args.speeds.split(","))
    result = analysis.additional_gap_map(pv_class, fv_class, args.drop, grid,
                                         gamma=args.gamma)
    out = _out_dir(args)
    stem = f"gap_map_{args.drop}_{pv_class}_{fv_class}"
    _write(out / f"{stem}.csv", analysis.gap_map_csv(result))
    _write(out / f"{stem}.json", analysis.to_json(result))
    peak = max(x for row in result["additional_gap"] for x in row)
    print(f"peak additional gap {peak:.2f} m")
    return EXIT_OK


def cmd_rss_compare(args) -> int:
    result = analysis.rss_compare(staleness=args.delay, gamma=args.gamma)
    out = _out_dir(args)
    _write(out / "rss_compare.json", analysis.to_json(result))
    means = ", ".join(f"{k} km/h: {v * 100:.1f}%"
                      for k, v in sorted(result["mean_improvement"].items(),
                                         key=lambda kv: int(kv[0])))
    print(f"mean improvement over the baseline - {means}")
    return EXIT_OK


def cmd_loss_sweep(args) -> int:
    cfg = _apply_overrides(_load(args), args)
    rates = tuple(float(x) for x in args.rates.split(","))
    result = analysis.loss_sweep(cfg, rates=rates, n_seeds=args.seeds,
                                 seed0=args.seed0)
    out = _out_dir(args)
    _write(out / "loss_sweep.json", analysis.to_json(result))
    n = len(result["runs"])
    print(f"{n} runs, total collisions: {result['total_collisions']}")
    return EXIT_OK if result["total_collisions"] == 0 else EXIT_COLLISION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoonsim",
        description="Deterministic safety-envelope platoon simulator "
                    f"(presets: {', '.join(preset_names())})")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario file (.scn/.json) or preset name")
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None,
                       help="output directory (default $PLATOONSIM_OUT or ./out)")

    p = sub.add_parser("run", help="simulate one scenario")
    add_common(p)
    p.add_argument("--drop", choices=["start", "end", "mid"], default=None)
    p.add_argument("--pass-through", dest="pass_through", action="store_true",
                   default=None, help="continue through collisions")
    p.add_argument("--trace", action="store_true", help="write the channel trace CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablation", help="run a scenario with one constraint dropped")
    add_common(p)
    p.add_argument("--drop", choices=["start", "end", "mid"], required=True)
    p.add_argument("--pass-through", dest="pass_through", action="store_true",
                   default=None)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("sweep-headway", help="stable headway over (delay, speed)")
    add_common(p, scenario=False)
    p.add_argument("--delays", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--speeds", default="30,40,50,60,70,80,100,120",
                   help="km/h values")
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(func=cmd_sweep_headway)

    p = sub.add_parser("gap-map", help="additional gap caused by one constraint")
    add_common(p, scenario=False)
    p.add_argument("--pair", required=True, help="pv:fv classes, e.g. midsize:small")
    p.add_argument("--drop", choices=["start", "end", "mid"], required=True)
    p.add_argument("--speeds", default="0,2,4,6,8,10,12,14,16,18,20,22")
    p.add_argument("--gamma", type=float, default=5.0)
    p.set_defaults(func=cmd_gap_map)

    p = sub.add_parser("rss-compare", help="headway vs the full-stop baseline")
    add_common(p, scenario=False)
    p.add_argument("--delay", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(func=cmd_rss_compare)

    p = sub.add_parser("loss-sweep", help="loss rates x seeds robustness sweep")
    add_common(p)
    p.add_argument("--rates", default="0,0.01,0.1,0.25,0.5")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed0", type=int, default=100)
    p.set_defaults(func=cmd_loss_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
