"""Scenario files: TOML in, TOML out.

Unknown tables or keys are rejected with the line they appear on.  Angles
are written in degrees, everything else in SI units.
"""

from __future__ import annotations

import re
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Mapping

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import DomainError, ScenarioError
from .harness import (
    AxisMode,
    ControllerKind,
    DisturbanceConfig,
    EnergyConfig,
    InitialState,
    Scenario,
)
from .integrator import IntegratorConfig
from .motor_plant import MotorParams
from .multimodel import PidSurfaceConfig, SmmmcConfig
from .observer import ObserverConfig, ObserverGains
from .smc_controller import SurfaceConfig
from .sun_reference import Ramp, ReferenceProfile, SolarDay, Step

REFERENCE_KINDS = {"step": Step, "ramp": Ramp, "solar_day": SolarDay}
KIND_NAMES = {Step: "step", Ramp: "ramp", SolarDay: "solar_day"}
AXIS_NAMES = ("azimuth", "altitude")
SURFACE_KEYS = ("a", "b", "g", "I", "psi", "u_min", "u_max")

TABLE_KEYS: dict[str, set[str]] = {
    "motor": {f.name for f in fields(MotorParams)},
    "smc": {"mu", "m1", "m2", "U0", "h", "U0_d", "mode"},
    "smmmc": {"n_models", "omega_max_deg_s", "anchors_deg_s", "reset_horizon", "weighting", "U0_d", "psi_d",
              *SURFACE_KEYS},
    "observer": {"I1", "I2", "mode", "filter_tau", "q_hat0_offset", "omega_hat0_offset"},
    "disturbance": {"kind", "amplitude", "period", "start", "samples"},
    "sim": {"controller", "method", "dt", "t_end", "axis_mode", "epoch", "record_every", "output_every",
            "initial_state"},
    "energy": {"latitude", "day", "p_max", "dt"},
}
REFERENCE_KEYS = {
    "step": {"kind", "axis", "target_deg", "t_on", "rise_time"},
    "ramp": {"kind", "axis", "rate_deg_s", "t_on"},
    "solar_day": {"kind", "axis", "latitude_deg", "day_of_year", "speedup", "return_time"},
}
REQUIRED_TABLES = ("motor", "reference")


class _Locator:
    """Maps ``(table path, key)`` to the line on which the key is written."""

    _header = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]\s*(#.*)?$")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-\"']+)\s*=")

    def __init__(self, text: str) -> None:
        self.lines: dict[tuple[str, str], int] = {}
        self.tables: dict[str, int] = {}
        table = ""
        for n, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                table = m.group(1).replace(" ", "")
                self.tables.setdefault(table, n)
                continue
            m = self._key.match(line)
            if m:
                self.lines.setdefault((table, m.group(1).strip("\"'")), n)

    def key(self, table: str, key: str) -> int | None:
        return self.lines.get((table, key))

    def table(self, table: str) -> int | None:
        return self.tables.get(table)

    def mentioned(self, table: str, message: str) -> int | None:
        """Line of the first key of ``table`` named in ``message``."""
        hits = [n for (t, k), n in self.lines.items() if t == table and re.search(rf"\b{re.escape(k)}\b", message)]
        return min(hits) if hits else None


def _check_keys(data: Mapping[str, Any], allowed: set[str], table: str, loc: _Locator) -> None:
    for key in data:
        if key not in allowed:
            line = loc.key(table, key) or loc.table(f"{table}.{key}")
            raise ScenarioError(f"unknown key '{key}' in [{table}]", line)


def _build(table: str, loc: _Locator, fn, *args, key: str | None = None, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (DomainError, TypeError, ValueError) as exc:
        line = loc.key(table, key) if key else loc.mentioned(table, str(exc))
        raise ScenarioError(f"[{table}] {exc}", line or loc.table(table)) from None


def _per_model(value: Any, n: int, name: str) -> list:
    if isinstance(value, list):
        if len(value) != n:
            raise DomainError(f"{name} has {len(value)} entries for {n} models")
        return value
    return [value] * n


def _reference(data: Mapping[str, Any], table: str, default_axis: str | None, loc: _Locator) -> ReferenceProfile:
    if not isinstance(data, Mapping):
        raise ScenarioError(f"[{table}] must be a table", loc.table(table))
    kind = data.get("kind")
    if kind not in REFERENCE_KINDS:
        raise ScenarioError(f"[{table}] kind must be one of {sorted(REFERENCE_KINDS)}", loc.key(table, "kind"))
    _check_keys(data, REFERENCE_KEYS[kind], table, loc)
    axis = data.get("axis", default_axis or "azimuth")
    if default_axis is not None and axis != default_axis:
        raise ScenarioError(f"[{table}] axis '{axis}' does not match its table", loc.key(table, "axis"))
    params = {k: v for k, v in data.items() if k not in ("kind", "axis")}
    profile = _build(table, loc, REFERENCE_KINDS[kind], **params)
    return _build(table, loc, ReferenceProfile, profile, axis, key="axis")


def _references(data: Mapping[str, Any], loc: _Locator) -> tuple[ReferenceProfile, ...]:
    if "kind" in data:
        return (_reference(data, "reference", None, loc),)
    refs = []
    for name, sub in data.items():
        if name not in AXIS_NAMES:
            raise ScenarioError(f"unknown key '{name}' in [reference]", loc.key("reference", name) or loc.table(f"reference.{name}"))
        refs.append(_reference(sub, f"reference.{name}", name, loc))
    if not refs:
        raise ScenarioError("[reference] defines no axis", loc.table("reference"))
    return tuple(refs)


def _smmmc(data: Mapping[str, Any], loc: _Locator) -> SmmmcConfig:
    data = dict(data)
    if "anchors_deg_s" in data:
        if "n_models" in data and data["n_models"] != len(data["anchors_deg_s"]):
            raise ScenarioError("n_models disagrees with anchors_deg_s", loc.key("smmmc", "n_models"))
        anchors = data.pop("anchors_deg_s")
        data.pop("n_models", None)
        data.pop("omega_max_deg_s", None)
    else:
        n = data.pop("n_models", 3)
        top = data.pop("omega_max_deg_s", 200.0)
        anchors = [0.0] if n == 1 else [top * j / (n - 1) for j in range(n)]
    n = len(anchors)
    per = {}
    for key in SURFACE_KEYS:
        if key in data:
            per[key] = _build("smmmc", loc, _per_model, data.pop(key), n, key, key=key)
    surfaces = []
    for i in range(n):
        kwargs = {k: v[i] for k, v in per.items()}
        surfaces.append(_build("smmmc", loc, PidSurfaceConfig, **kwargs))
    return _build("smmmc", loc, SmmmcConfig, anchors_deg_s=tuple(anchors), surfaces=tuple(surfaces), **data)


def _observer(data: Mapping[str, Any], loc: _Locator) -> ObserverConfig:
    data = dict(data)
    gains = _build("observer", loc, ObserverGains, data.pop("I1", 0.1), data.pop("I2", 1e-6))
    return _build("observer", loc, ObserverConfig, gains, **data)


def _disturbance(data: Mapping[str, Any], loc: _Locator) -> DisturbanceConfig:
    data = dict(data)
    if "samples" in data:
        data["samples"] = tuple(tuple(s) for s in data["samples"])
    return _build("disturbance", loc, DisturbanceConfig, **data)


def scenario_from_mapping(doc: Mapping[str, Any], text: str = "") -> Scenario:
    """Build a scenario from a parsed document; ``text`` is used to locate errors."""
    loc = _Locator(text)
    for table in doc:
        if table not in TABLE_KEYS and table != "reference":
            raise ScenarioError(f"unknown table [{table}]", loc.table(table) or loc.key("", table))
    for table, allowed in TABLE_KEYS.items():
        if table in doc:
            if not isinstance(doc[table], Mapping):
                raise ScenarioError(f"[{table}] must be a table", loc.key("", table))
            _check_keys(doc[table], allowed, table, loc)
    for table in REQUIRED_TABLES:
        if table not in doc:
            raise ScenarioError(f"missing [{table}]")

    motor = _build("motor", loc, MotorParams.from_mapping, doc["motor"])
    refs = _references(doc["reference"], loc)
    sim = dict(doc.get("sim", {}))
    integrator = _build(
        "sim", loc, IntegratorConfig,
        **{k: sim.pop(k) for k in ("method", "dt", "t_end") if k in sim},
    )
    kwargs: dict[str, Any] = dict(
        references=refs,
        motor=motor,
        integrator=integrator,
        smc=_build("smc", loc, SurfaceConfig, **doc.get("smc", {})),
        smmmc=_smmmc(doc.get("smmmc", {}), loc),
        observer=_observer(doc.get("observer", {}), loc),
        disturbance=_disturbance(doc.get("disturbance", {}), loc),
    )
    if "energy" in doc:
        kwargs["energy"] = _build("energy", loc, EnergyConfig, **doc["energy"])
    return _build("sim", loc, Scenario, **kwargs, **sim)


def loads(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError(f"invalid TOML: {exc}", int(m.group(1)) if m else None) from None
    return scenario_from_mapping(doc, text)


def load(path: str | Path) -> Scenario:
    return loads(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# writing


def _reference_table(ref: ReferenceProfile) -> dict[str, Any]:
    out: dict[str, Any] = {"kind": KIND_NAMES[type(ref.kind)], "axis": ref.axis.value}
    for f in fields(ref.kind):
        out[f.name] = getattr(ref.kind, f.name)
    return out


def _collapse(values: list) -> Any:
    return values[0] if all(v == values[0] for v in values) else values


def scenario_to_mapping(sc: Scenario) -> dict[str, Any]:
    doc: dict[str, Any] = {"motor": sc.motor.to_mapping()}
    if len(sc.references) == 1:
        doc["reference"] = _reference_table(sc.references[0])
    else:
        doc["reference"] = {r.axis.value: _reference_table(r) for r in sc.references}
    doc["smc"] = {f.name: getattr(sc.smc, f.name) for f in fields(SurfaceConfig)}
    doc["smc"]["mode"] = sc.smc.mode.value
    mm = sc.smmmc
    doc["smmmc"] = {"anchors_deg_s": list(mm.anchors_deg_s)}
    for key in SURFACE_KEYS:
        doc["smmmc"][key] = _collapse([getattr(c, key) for c in mm.surfaces])
    doc["smmmc"].update(
        reset_horizon=mm.reset_horizon, weighting=mm.weighting.value, U0_d=mm.U0_d, psi_d=mm.psi_d
    )
    ob = sc.observer
    doc["observer"] = {"I1": ob.gains.I1, "I2": ob.gains.I2, "mode": ob.mode.value}
    if ob.filter_tau is not None:
        doc["observer"]["filter_tau"] = ob.filter_tau
    doc["observer"].update(q_hat0_offset=ob.q_hat0_offset, omega_hat0_offset=ob.omega_hat0_offset)
    d = sc.disturbance
    doc["disturbance"] = {"kind": d.kind.value, "amplitude": d.amplitude, "period": d.period, "start": d.start}
    if d.samples:
        doc["disturbance"]["samples"] = [list(s) for s in d.samples]
    doc["sim"] = {
        "controller": sc.controller.value,
        "method": sc.integrator.method.value,
        "dt": sc.integrator.dt,
        "t_end": sc.integrator.t_end,
        "axis_mode": sc.axis_mode.value,
        "epoch": sc.epoch,
        "record_every": sc.record_every,
        "output_every": sc.output_every,
        "initial_state": sc.initial_state.value,
    }
    if sc.energy is not None:
        doc["energy"] = {f.name: getattr(sc.energy, f.name) for f in fields(EnergyConfig)}
    return doc


def dumps(sc: Scenario) -> str:
    return tomli_w.dumps(scenario_to_mapping(sc))


def dump(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps(sc), encoding="utf-8")


def with_override(sc: Scenario, key: str, value: Any) -> Scenario:
    """Copy of ``sc`` with ``table.key`` replaced, e.g. ``smc.U0``."""
    table, _, name = key.partition(".")
    if not name:
        raise ScenarioError(f"override key must look like table.key, got '{key}'")
    doc = scenario_to_mapping(sc)
    if table == "reference" and len(sc.references) > 1:
        raise ScenarioError("overrides of dual-axis references are not supported")
    if table not in doc:
        doc[table] = {}
    doc[table][name] = value
    return scenario_from_mapping(doc)


def bundled_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def bundled(name: str) -> Path:
    path = bundled_dir() / (name if name.endswith(".toml") else f"{name}.toml")
    if not path.exists():
        raise FileNotFoundError(path)
    return path


def bundled_names() -> list[str]:
    return sorted(p.stem for p in bundled_dir().glob("*.toml"))

