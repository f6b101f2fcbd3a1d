"""Scenario files: a flat sectioned key-value text format plus a JSON twin.

Sections are [vehicles], [leader], [comm], [run].  Unknown sections or keys
are hard errors (typo safety), and parse errors carry the line number.  A
file whose first non-blank character is '{' is read as JSON with the same
section/key structure.
"""

from __future__ import annotations

import json
import math
from importlib import resources

from .channel import CommConfig
from .engine import (PROFILE_KINDS, AccelCruiseBrake, ConstantAccel, Fluctuating,
                     ScenarioConfig, VehicleInit)
from .kinematics import make_spec
from .safety import AblationFlags


class ScenarioError(ValueError):
    pass


_SECTIONS = {"vehicles", "leader", "comm", "run"}
_KEYS = {
    "vehicles": {"types", "gaps", "speeds", "speed_caps", "stop_gaps"},
    "leader": {"profile", "accel", "v_cap", "brake_at", "plateau1", "rate1",
               "hold1", "plateau2", "rate2", "hold2", "amp", "period", "cycles"},
    "comm": {"delta", "tau", "loss_rate", "decision_delay", "extra_cycles"},
    "run": {"duration", "seed", "gamma", "pass_through", "warm_start", "label"},
}


def _parse_text(text: str) -> dict[str, dict[str, str]]:
    data: dict[str, dict[str, str]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ScenarioError(f"line {lineno}: unknown section [{section}]")
            data.setdefault(section, {})
            continue
        if section is None:
            raise ScenarioError(f"line {lineno}: key outside any section")
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS[section]:
            raise ScenarioError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if key in data[section]:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        data[section][key] = value
    return data


def _parse_json(text: str) -> dict[str, dict[str, str]]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON scenario: {exc}") from exc
    if not isinstance(obj, dict):
        raise ScenarioError("JSON scenario must be an object of sections")
    data: dict[str, dict[str, str]] = {}
    for section, body in obj.items():
        section = section.lower()
        if section not in _SECTIONS:
            raise ScenarioError(f"unknown section {section!r}")
        if not isinstance(body, dict):
            raise ScenarioError(f"section {section!r} must be an object")
        data[section] = {}
        for key, value in body.items():
            key = key.lower()
            if key not in _KEYS[section]:
                raise ScenarioError(f"unknown key {key!r} in [{section}]")
            if isinstance(value, list):
                data[section][key] = ", ".join(str(v) for v in value)
            elif isinstance(value, bool):
                data[section][key] = "true" if value else "false"
            else:
                data[section][key] = str(value)
    return data


def _floats(value: str) -> list[float]:
    return [float(part) for part in value.split(",") if part.strip()]


def _strings(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ScenarioError(f"expected a boolean, got {value!r}")


def parse_scenario(text: str, label: str = "") -> ScenarioConfig:
    stripped = text.lstrip()
    data = _parse_json(text) if stripped.startswith("{") else _parse_text(text)

    for required in ("vehicles", "leader", "run"):
        if required not in data:
            raise ScenarioError(f"missing [{required}] section")
    veh = data["vehicles"]
    if "types" not in veh or not _strings(veh["types"]):
        raise ScenarioError("[vehicles] needs a non-empty 'types' list")
    types = _strings(veh["types"])
    n = len(types)
    gaps = _floats(veh.get("gaps", ""))
    speeds = _floats(veh.get("speeds", "")) or [0.0] * n
    caps = _floats(veh.get("speed_caps", "")) or [22.0] * n
    stop_gaps = _floats(veh.get("stop_gaps", "")) or [1.0] * n
    if len(gaps) != n - 1:
        raise ScenarioError(f"'gaps' needs {n - 1} values, got {len(gaps)}")
    for name, vals in (("speeds", speeds), ("speed_caps", caps),
                       ("stop_gaps", stop_gaps)):
        if len(vals) != n:
            raise ScenarioError(f"{name!r} needs {n} values, got {len(vals)}")

    runsec = data["run"]
    gamma = float(runsec.get("gamma", 5.0))
    vehicles = []
    for i, cls in enumerate(types):
        try:
            spec = make_spec(i, cls, stop_gap=stop_gaps[i], speed_max=caps[i],
                             elastic_coeff=gamma)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc
        vehicles.append(VehicleInit(spec=spec, gap=gaps[i - 1] if i else 0.0,
                                    speed=speeds[i]))

    profile = _build_profile(data["leader"], vehicles[0].spec)

    comm_sec = data.get("comm", {})
    tau = _floats(comm_sec.get("tau", "0.04, 0.08"))
    if len(tau) != 2:
        raise ScenarioError("'tau' needs exactly two values (min, max)")
    try:
        comm = CommConfig(delta=float(comm_sec.get("delta", 0.1)),
                          tau_min=tau[0], tau_max=tau[1],
                          loss_rate=float(comm_sec.get("loss_rate", 0.0)),
                          decision_delay=float(comm_sec.get("decision_delay", 0.0)),
                          extra_cycles=int(comm_sec.get("extra_cycles", 0)))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    try:
        return ScenarioConfig(
            vehicles=vehicles, leader_profile=profile, comm=comm,
            duration=float(runsec.get("duration", 60.0)),
            seed=int(runsec.get("seed", 1)),
            pass_through=_bool(runsec.get("pass_through", "false")),
            warm_start=_bool(runsec.get("warm_start", "false")),
            label=runsec.get("label", label))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def _build_profile(sec: dict[str, str], leader_spec):
    kind = sec.get("profile", "constant_accel").strip().lower()
    if kind not in PROFILE_KINDS:
        raise ScenarioError(f"unknown leader profile {kind!r}")
    get = lambda key, default: float(sec[key]) if key in sec else default
    if kind == "constant_accel":
        return ConstantAccel(accel=get("accel", leader_spec.accel_max),
                             v_cap=get("v_cap", leader_spec.speed_max))
    if kind == "accel_cruise_brake":
        if "brake_at" not in sec:
            raise ScenarioError("accel_cruise_brake profile needs 'brake_at'")
        return AccelCruiseBrake(accel=get("accel", leader_spec.accel_max),
                                v_cap=get("v_cap", leader_spec.speed_max),
                                brake_at=float(sec["brake_at"]))
    return Fluctuating(plateau1=get("plateau1", 8.5),
                       rate1=get("rate1", 0.5),
                       hold1=get("hold1", 45.0),
                       plateau2=get("plateau2", 12.75),
                       rate2=get("rate2", 0.3),
                       hold2=get("hold2", 70.0),
                       amp=get("amp", 0.3),
                       period=get("period", 20.0),
                       cycles=int(get("cycles", 2)),
                       brake_at=get("brake_at", 187.0))


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), label=path)


def load_preset(name: str) -> ScenarioConfig:
    ref = resources.files("platoonsim").joinpath(f"presets/{name}.scn")
    if not ref.is_file():
        raise ScenarioError(f"no preset named {name!r}")
    return parse_scenario(ref.read_text(encoding="utf-8"), label=f"preset:{name}")


def preset_names() -> list[str]:
    root = resources.files("platoonsim").joinpath("presets")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))
