"""Scenario configuration files: named sections of key = value pairs.

A scenario file overrides defaults; an empty file (or empty sections)
reproduces the standard setup.  Unknown sections or keys are rejected with
the file line they appear on, as are values that violate a parameter
invariant.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field

from .coordinator import SafetyParams
from .driver_model import DriverParams
from .engine import ConfigError, SimConfig
from .geometry import RoundaboutGeometry
from .metrics import FuelModelCoefficients
from .trajectory import ActuationLimits

DEFAULT_MPRS = (0.0, 0.2, 0.5, 0.8, 1.0)
DEFAULT_SEEDS = (1, 2, 3, 4, 5)

_SECTION_TYPES = {
    "geometry": RoundaboutGeometry,
    "limits": ActuationLimits,
    "safety": SafetyParams,
    "driver": DriverParams,
    "fuel": FuelModelCoefficients,
}

# SimConfig keys a scenario may set; mpr and seed come from the sweep.
_SIM_KEYS = {
    "step": float,
    "duration": float,
    "dispatch_window": float,
    "demand_per_approach": float,
    "total_vehicles": int,
    "min_generation_headway": float,
    "log_trajectory_every": float,
    "aggregate_every": float,
}


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    geometry: RoundaboutGeometry = field(default_factory=RoundaboutGeometry)
    limits: ActuationLimits = field(default_factory=ActuationLimits)
    safety: SafetyParams = field(default_factory=SafetyParams)
    driver: DriverParams = field(default_factory=DriverParams)
    fuel: FuelModelCoefficients = field(default_factory=FuelModelCoefficients)
    sim_overrides: dict = field(default_factory=dict)
    mprs: tuple[float, ...] = DEFAULT_MPRS
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def sim_config(self, mpr: float, seed: int) -> SimConfig:
        return SimConfig(mpr=mpr, seed=seed, **self.sim_overrides)


def _line_of(text: str, section: str, key: str | None = None) -> int:
    """Best-effort line anchor for a section header or a key inside it."""
    lines = text.splitlines()
    in_section = False
    for i, line in enumerate(lines, start=1):
        stripped = line.strip()
        if stripped.startswith("["):
            if key is None and stripped == f"[{section}]":
                return i
            in_section = stripped == f"[{section}]"
        elif in_section and key is not None:
            if re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
                return i
    return 0


def _coerce(raw: str, like, path: str, line: int, key: str):
    target = type(like) if not isinstance(like, type) else like
    try:
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
    except ValueError:
        raise ScenarioError(
            f"{path}:{line}: invalid value for '{key}': {raw!r}"
        ) from None
    raise ScenarioError(f"{path}:{line}: unsupported parameter type for '{key}'")


def _parse_list(raw: str, conv, path: str, line: int, key: str) -> tuple:
    parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
    if not parts:
        raise ScenarioError(f"{path}:{line}: empty list for '{key}'")
    try:
        return tuple(conv(p) for p in parts)
    except ValueError:
        raise ScenarioError(
            f"{path}:{line}: invalid list value for '{key}': {raw!r}"
        ) from None


def load_scenario(path: str) -> Scenario:
    """Parse a scenario file, rejecting anything it does not understand."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario file: {exc}") from exc

    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from exc

    sections = {}
    for name in parser.sections():
        if name not in _SECTION_TYPES and name not in ("sim", "sweep"):
            raise ScenarioError(
                f"{path}:{_line_of(text, name)}: unknown section '[{name}]'"
            )
        sections[name] = dict(parser.items(name))

    built = {}
    for name, cls in _SECTION_TYPES.items():
        raw = sections.get(name, {})
        defaults = cls()
        known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in known:
                raise ScenarioError(
                    f"{path}:{_line_of(text, name, key)}: unknown key '{key}' "
                    f"in section '[{name}]'"
                )
            kwargs[key] = _coerce(value, known[key], path, _line_of(text, name, key), key)
        try:
            built[name] = cls(**kwargs)
        except ValueError as exc:
            raise ScenarioError(
                f"{path}:{_line_of(text, name)}: invalid [{name}] section: {exc}"
            ) from exc

    sim_overrides = {}
    for key, value in sections.get("sim", {}).items():
        if key not in _SIM_KEYS:
            raise ScenarioError(
                f"{path}:{_line_of(text, 'sim', key)}: unknown key '{key}' "
                "in section '[sim]'"
            )
        sim_overrides[key] = _coerce(
            value, _SIM_KEYS[key], path, _line_of(text, "sim", key), key
        )

    mprs, seeds = DEFAULT_MPRS, DEFAULT_SEEDS
    for key, value in sections.get("sweep", {}).items():
        line = _line_of(text, "sweep", key)
        if key == "mpr":
            mprs = _parse_list(value, float, path, line, key)
            for m in mprs:
                if not 0.0 <= m <= 1.0:
                    raise ScenarioError(
                        f"{path}:{line}: mpr value {m} outside [0, 1]"
                    )
        elif key == "seeds":
            seeds = _parse_list(value, int, path, line, key)
        else:
            raise ScenarioError(
                f"{path}:{line}: unknown key '{key}' in section '[sweep]'"
            )

    scenario = Scenario(
        geometry=built["geometry"],
        limits=built["limits"],
        safety=built["safety"],
        driver=built["driver"],
        fuel=built["fuel"],
        sim_overrides=sim_overrides,
        mprs=mprs,
        seeds=seeds,
    )
    # Cross-section checks: build one config so SimConfig invariants fire now,
    # and reject divisors the scheduler depends on.
    try:
        scenario.sim_config(mpr=scenario.mprs[0], seed=scenario.seeds[0])
    except ConfigError as exc:
        raise ScenarioError(f"{path}: invalid [sim] section: {exc}") from exc
    if scenario.limits.v_min <= 0.0:
        raise ScenarioError(
            f"{path}:{_line_of(text, 'limits', 'v_min')}: v_min must be positive; "
            "the latest-arrival bound divides the control-zone length by it"
        )
    return scenario


def validation_report(scenario: Scenario, path: str) -> str:
    """Human-readable derived quantities for desk checking a scenario."""
    g = scenario.geometry
    from .geometry import Approach  # local to keep module imports lean

    cfg = scenario.sim_config(mpr=scenario.mprs[0], seed=scenario.seeds[0])
    mean_headway = 3600.0 / cfg.demand_per_approach
    lines = [
        f"scenario OK: {path}",
        "geometry:",
        f"  eastbound route length  = {g.route_length(Approach.EASTBOUND):.3f} m",
        f"  westbound route length  = {g.route_length(Approach.WESTBOUND):.3f} m",
        f"  circulating arc (L_r)   = {g.circulating_arc:.1f} m",
        "  zone boundaries eastbound: "
        f"entry [0, {g.entry_zone_length:g}), control [{g.entry_zone_length:g}, "
        f"{g.approach_length:g}), merging [{g.approach_length:g}, "
        f"{g.merge_exit_s(Approach.EASTBOUND):g}), exit "
        f"[{g.merge_exit_s(Approach.EASTBOUND):g}, {g.route_length(Approach.EASTBOUND):g})",
        "  zone boundaries westbound: "
        f"entry [0, {g.entry_zone_length:g}), control [{g.entry_zone_length:g}, "
        f"{g.approach_length:g}), circulating [{g.approach_length:g}, "
        f"{g.merge_entry_s(Approach.WESTBOUND):g}), merging "
        f"[{g.merge_entry_s(Approach.WESTBOUND):g}, {g.merge_exit_s(Approach.WESTBOUND):g}), "
        f"exit [{g.merge_exit_s(Approach.WESTBOUND):g}, {g.route_length(Approach.WESTBOUND):g})",
        "free flow:",
        f"  eastbound = {g.free_flow_time(Approach.EASTBOUND):.3f} s",
        f"  westbound = {g.free_flow_time(Approach.WESTBOUND):.3f} s",
        "demand:",
        f"  mean generation headway = {mean_headway:.3f} s",
        f"  vehicles per approach   = {cfg.total_vehicles // 2}",
        f"  dispatch window         = {cfg.dispatch_window:g} s of {cfg.duration:g} s",
        f"sweep: mpr = {list(scenario.mprs)}, seeds = {list(scenario.seeds)}",
    ]
    return "\n".join(lines)
