"""Deterministic safety-envelope platoon simulator for connected automated
vehicles with discrete communication and decision cycles."""

from .channel import CommConfig, StatusMessage, kappa_floor
from .engine import (AccelCruiseBrake, ConstantAccel, Fluctuating, RunRecord,
                     ScenarioConfig, VehicleInit, metrics, run, summary_json,
                     timeseries_csv)
from .kinematics import (BrakeOutcome, VehicleState, VehicleSpec, advance_state,
                         hard_brake, make_spec)
from .safety import (AblationFlags, DecisionInput, PvStatic, decide_accel,
                     equilibrium_gap, min_feasible_gap, stable_headway)
from .scenario import load_preset, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "AblationFlags", "AccelCruiseBrake", "BrakeOutcome", "CommConfig",
    "ConstantAccel", "DecisionInput", "Fluctuating", "PvStatic", "RunRecord",
    "ScenarioConfig", "StatusMessage", "VehicleInit", "VehicleSpec",
    "VehicleState", "advance_state", "decide_accel", "equilibrium_gap",
    "hard_brake", "kappa_floor", "load_preset", "load_scenario", "make_spec",
    "metrics", "min_feasible_gap", "parse_scenario", "run", "stable_headway",
    "summary_json", "timeseries_csv",
]
