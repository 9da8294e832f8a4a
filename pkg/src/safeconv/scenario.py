"""Scenario and case files: YAML schema, validation, bundled presets.

Validation is collect-all: a bad file raises ScenarioError carrying every
problem found, each tagged with its key path and line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import yaml

from .droop_controller import DroopParams
from .errors import ConfigurationError, ScenarioError
from .feasible_region import TrackingMode
from .dq_network import DqVector, FilterLineParams
from .network_sim import (
    BranchSpec,
    BusSpec,
    DroopControllerSpec,
    GridVoltageScale,
    InverterAttachment,
    NetworkCase,
    NetworkScenario,
    NoiseBurst,
    OcController,
    SetpointChange,
    SingleBusScenario,
)
from .sdp_controller import ControllerConfig

PRESET_NAMES = (
    "setpoint_step_oc",
    "setpoint_step_droop",
    "voltage_drop_oc",
    "voltage_drop_droop",
    "ieee14_dt001",
    "ieee14_dt005",
)

_MODES = {"pq": TrackingMode.PQ, "pv2": TrackingMode.PV2, "qv2": TrackingMode.QV2}


@dataclass(frozen=True)
class Scenario:
    """A validated scenario ready to run."""

    name: str
    kind: str  # "single_bus" | "network"
    sim: Union[SingleBusScenario, NetworkScenario]
    plots: bool = True
    source_path: Optional[Path] = None


# ---------------------------------------------------------------------------
# YAML with line positions
# ---------------------------------------------------------------------------

def _node_lines(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    lines: dict[str, int] = {}

    def walk(node, path):
        lines[path or "<root>"] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key_node, val_node in node.value:
                walk(val_node, f"{path}.{key_node.value}" if path else str(key_node.value))
        elif isinstance(node, yaml.SequenceNode):
            for idx, item in enumerate(node.value):
                walk(item, f"{path}[{idx}]")

    root = yaml.compose(text)
    if root is not None:
        walk(root, "")
    return lines


class _Validator:
    def __init__(self, text: str):
        self.problems: list[str] = []
        try:
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ScenarioError([f"not valid YAML: {exc}"]) from exc
        self.lines = _node_lines(text)

    def fail(self, path: str, message: str):
        line = self.lines.get(path)
        where = f"{path} (line {line})" if line else path
        self.problems.append(f"{where}: {message}")

    def check_unknown(self, mapping, path: str, allowed):
        if not isinstance(mapping, dict):
            return
        for key in mapping:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else str(key), "unknown key")

    def mapping(self, parent, key: str, path: str, required=True):
        val = (parent or {}).get(key)
        if val is None:
            if required:
                self.fail(path, "required section missing")
            return None
        if not isinstance(val, dict):
            self.fail(path, f"expected a mapping, got {type(val).__name__}")
            return None
        return val

    def number(self, parent, key: str, path: str, required=False, default=None,
               minimum=None, maximum=None, exclusive_min=None):
        val = (parent or {}).get(key, None)
        if val is None:
            if required:
                self.fail(path, "required value missing")
            return default
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(path, f"expected a number, got {val!r}")
            return default
        val = float(val)
        if not math.isfinite(val):
            self.fail(path, "must be finite")
            return default
        if minimum is not None and val < minimum:
            self.fail(path, f"must be >= {minimum}, got {val}")
        if exclusive_min is not None and val <= exclusive_min:
            self.fail(path, f"must be > {exclusive_min}, got {val}")
        if maximum is not None and val > maximum:
            self.fail(path, f"must be <= {maximum}, got {val}")
        return val

    def integer(self, parent, key: str, path: str, default=0):
        val = (parent or {}).get(key, default)
        if isinstance(val, bool) or not isinstance(val, int):
            self.fail(path, f"expected an integer, got {val!r}")
            return default
        return val

    def string(self, parent, key: str, path: str, required=False, default=None, choices=None):
        val = (parent or {}).get(key)
        if val is None:
            if required:
                self.fail(path, "required value missing")
            return default
        val = str(val)
        if choices is not None and val not in choices:
            self.fail(path, f"must be one of {sorted(choices)}, got {val!r}")
            return default
        return val

    def dq_pair(self, parent, key: str, path: str, required=True, default=(1.0, 0.0)):
        val = (parent or {}).get(key)
        if val is None:
            if required:
                self.fail(path, "required value missing")
            return default
        if (not isinstance(val, (list, tuple)) or len(val) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in val)):
            self.fail(path, f"expected [d, q] numbers, got {val!r}")
            return default
        return float(val[0]), float(val[1])

    def raise_if_failed(self):
        if self.problems:
            raise ScenarioError(self.problems)


# ---------------------------------------------------------------------------
# controller / event blocks
# ---------------------------------------------------------------------------

_OC_KEYS = {"type", "mode", "s1_setpoint", "s2_setpoint", "gamma", "rho", "step_size",
            "i_max", "estimator_gain"}
_DROOP_KEYS = {"type", "mode", "s1_setpoint", "s2_setpoint", "m_p_hz", "m_q", "m_v2",
               "v_nom", "omega_nom_hz", "filter_tau", "i_max"}


def _parse_oc_config(v: _Validator, block, path: str, allow_type_key=True):
    allowed = _OC_KEYS if allow_type_key else (_OC_KEYS - {"type"})
    v.check_unknown(block, path, allowed)
    mode = v.string(block, "mode", f"{path}.mode", required=True, choices=_MODES)
    s1 = v.number(block, "s1_setpoint", f"{path}.s1_setpoint", required=True)
    s2 = v.number(block, "s2_setpoint", f"{path}.s2_setpoint", required=True)
    gamma = v.number(block, "gamma", f"{path}.gamma", default=1.0, minimum=0.0)
    rho = v.number(block, "rho", f"{path}.rho", default=1e-3, exclusive_min=0.0)
    step = v.number(block, "step_size", f"{path}.step_size", default=1.0, exclusive_min=0.0)
    i_max = v.number(block, "i_max", f"{path}.i_max", default=1.0, exclusive_min=0.0)
    gain = v.number(block, "estimator_gain", f"{path}.estimator_gain", default=1.0,
                    exclusive_min=0.0, maximum=1.0)
    if v.problems:
        return None
    return ControllerConfig(
        mode=_MODES[mode], s1_setpoint=s1, s2_setpoint=s2, gamma=gamma, rho=rho,
        step_size=step, i_max=i_max, estimator_gain=gain,
    )


def _parse_droop_spec(v: _Validator, block, path: str):
    v.check_unknown(block, path, _DROOP_KEYS)
    mode = v.string(block, "mode", f"{path}.mode", required=True, choices={"pq", "pv2"})
    s1 = v.number(block, "s1_setpoint", f"{path}.s1_setpoint", required=True)
    s2 = v.number(block, "s2_setpoint", f"{path}.s2_setpoint", required=True)
    m_p = v.number(block, "m_p_hz", f"{path}.m_p_hz", default=0.5, minimum=0.0)
    m_q = v.number(block, "m_q", f"{path}.m_q", default=0.05, minimum=0.0)
    m_v2 = v.number(block, "m_v2", f"{path}.m_v2", default=0.05, minimum=0.0)
    v_nom = v.number(block, "v_nom", f"{path}.v_nom", default=1.0, exclusive_min=0.0)
    f_nom = v.number(block, "omega_nom_hz", f"{path}.omega_nom_hz", default=60.0,
                     exclusive_min=0.0)
    tau = v.number(block, "filter_tau", f"{path}.filter_tau", default=0.016,
                   exclusive_min=0.0)
    i_max = v.number(block, "i_max", f"{path}.i_max", default=1.0, exclusive_min=0.0)
    if v.problems:
        return None
    return DroopControllerSpec(
        params=DroopParams(m_p_hz=m_p, m_q=m_q, m_v2=m_v2,
                           omega_nom=2.0 * math.pi * f_nom, v_nom=v_nom,
                           filter_tau=tau, i_max=i_max),
        mode=_MODES[mode], s1_setpoint=s1, s2_setpoint=s2,
    )


_EVENT_KEYS = {
    "setpoint_change": {"time", "type", "s1", "s2", "inverter"},
    "grid_voltage_scale": {"time", "type", "factor"},
    "noise_burst": {"time", "type", "variance0", "tau"},
}


def _parse_events(v: _Validator, raw, path: str):
    if raw is None:
        return ()
    if not isinstance(raw, list):
        v.fail(path, f"expected a list, got {type(raw).__name__}")
        return ()
    events = []
    prev_time = -math.inf
    for idx, item in enumerate(raw):
        p = f"{path}[{idx}]"
        if not isinstance(item, dict):
            v.fail(p, "expected a mapping")
            continue
        etype = v.string(item, "type", f"{p}.type", required=True,
                         choices=_EVENT_KEYS)
        time = v.number(item, "time", f"{p}.time", required=True, minimum=0.0)
        if etype is None or time is None:
            continue
        v.check_unknown(item, p, _EVENT_KEYS[etype])
        if time < prev_time:
            v.fail(f"{p}.time", f"event times must be nondecreasing ({time} after {prev_time})")
        prev_time = max(prev_time, time)
        if etype == "setpoint_change":
            s1 = v.number(item, "s1", f"{p}.s1")
            s2 = v.number(item, "s2", f"{p}.s2")
            if s1 is None and s2 is None:
                v.fail(p, "setpoint_change needs s1 and/or s2")
            inverter = item.get("inverter")
            inverter = None if inverter in (None, "all") else str(inverter)
            events.append(SetpointChange(time=time, s1=s1, s2=s2, inverter=inverter))
        elif etype == "grid_voltage_scale":
            factor = v.number(item, "factor", f"{p}.factor", required=True, exclusive_min=0.0)
            if factor is not None:
                events.append(GridVoltageScale(time=time, factor=factor))
        else:
            var0 = v.number(item, "variance0", f"{p}.variance0", required=True, minimum=0.0)
            tau = v.number(item, "tau", f"{p}.tau", required=True, exclusive_min=0.0)
            if var0 is not None and tau is not None:
                events.append(NoiseBurst(time=time, variance0=var0, tau=tau))
    return tuple(events)


# ---------------------------------------------------------------------------
# case files
# ---------------------------------------------------------------------------

_BUS_KEYS = {"id", "kind", "load_p", "load_q", "shunt_g", "shunt_b"}
_BRANCH_KEYS = {"from", "to", "r", "x", "b"}
_INVERTER_KEYS = {"bus", "filter_r", "filter_x", "controller"}


def parse_case(path) -> NetworkCase:
    """Load and validate a network case file."""
    path = Path(path)
    if not path.is_file():
        raise ScenarioError([f"case file not found: {path}"])
    v = _Validator(path.read_text())
    data = v.data if isinstance(v.data, dict) else {}
    if not isinstance(v.data, dict):
        v.fail("<root>", "case file must be a mapping")
    v.check_unknown(data, "", {"name", "slack_voltage", "buses", "branches", "inverters"})
    slack_v = v.dq_pair(data, "slack_voltage", "slack_voltage", required=False,
                        default=(1.06, 0.0))

    buses = []
    seen_ids = {}
    raw_buses = data.get("buses")
    if not isinstance(raw_buses, list) or not raw_buses:
        v.fail("buses", "at least one bus required")
        raw_buses = []
    for idx, item in enumerate(raw_buses):
        p = f"buses[{idx}]"
        if not isinstance(item, dict):
            v.fail(p, "expected a mapping")
            continue
        v.check_unknown(item, p, _BUS_KEYS)
        bid = item.get("id")
        if bid is None:
            v.fail(f"{p}.id", "required value missing")
            continue
        bid = str(bid)
        if bid in seen_ids:
            v.fail(f"{p}.id", f"duplicate bus id {bid!r} (first at line {seen_ids[bid]})")
        seen_ids[bid] = v.lines.get(f"{p}.id")
        kind = v.string(item, "kind", f"{p}.kind", default="passive",
                        choices={"slack", "inverter", "passive"})
        load_p = v.number(item, "load_p", f"{p}.load_p", default=0.0)
        load_q = v.number(item, "load_q", f"{p}.load_q", default=0.0)
        shunt_g = v.number(item, "shunt_g", f"{p}.shunt_g", default=0.0)
        shunt_b = v.number(item, "shunt_b", f"{p}.shunt_b", default=0.0)
        if not v.problems:
            buses.append(BusSpec(id=bid, kind=kind, load=complex(load_p, load_q),
                                 shunt=complex(shunt_g, shunt_b)))

    branches = []
    for idx, item in enumerate(data.get("branches") or []):
        p = f"branches[{idx}]"
        if not isinstance(item, dict):
            v.fail(p, "expected a mapping")
            continue
        v.check_unknown(item, p, _BRANCH_KEYS)
        f = v.string(item, "from", f"{p}.from", required=True)
        t = v.string(item, "to", f"{p}.to", required=True)
        r = v.number(item, "r", f"{p}.r", required=True, minimum=0.0)
        x = v.number(item, "x", f"{p}.x", required=True)
        b = v.number(item, "b", f"{p}.b", default=0.0, minimum=0.0)
        if f is not None and t is not None and r is not None and x is not None:
            if r == 0 and x == 0:
                v.fail(p, "branch impedance must be nonzero")
            elif f == t:
                v.fail(p, "branch endpoints must differ")
            elif not v.problems:
                branches.append(BranchSpec(from_bus=f, to_bus=t, r=r, x=x, shunt_b=b))

    inverters = []
    for idx, item in enumerate(data.get("inverters") or []):
        p = f"inverters[{idx}]"
        if not isinstance(item, dict):
            v.fail(p, "expected a mapping")
            continue
        v.check_unknown(item, p, _INVERTER_KEYS)
        bus = item.get("bus")
        if bus is None:
            v.fail(f"{p}.bus", "required value missing")
            continue
        fr = v.number(item, "filter_r", f"{p}.filter_r", required=True, minimum=0.0)
        fx = v.number(item, "filter_x", f"{p}.filter_x", required=True)
        ctrl_block = v.mapping(item, "controller", f"{p}.controller")
        cfg = None
        if ctrl_block is not None:
            cfg = _parse_oc_config(v, ctrl_block, f"{p}.controller", allow_type_key=False)
        if fr is not None and fx is not None and cfg is not None and not v.problems:
            if fr == 0 and fx == 0:
                v.fail(p, "filter impedance must be nonzero")
            else:
                inverters.append(InverterAttachment(bus=str(bus), filter_r=fr,
                                                    filter_x=fx, config=cfg))

    v.raise_if_failed()
    try:
        return NetworkCase(buses=tuple(buses), branches=tuple(branches),
                           inverters=tuple(inverters),
                           slack_voltage=complex(slack_v[0], slack_v[1]))
    except ConfigurationError as exc:
        raise ScenarioError([str(exc)]) from exc


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

_TOP_KEYS = {"name", "kind", "dt", "duration", "seed", "network", "controller",
             "initial_current", "events", "outputs"}


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file.

    Raises ScenarioError listing every validation problem with its position.
    """
    path = Path(path)
    if not path.is_file():
        raise ScenarioError([f"scenario file not found: {path}"])
    v = _Validator(path.read_text())
    if not isinstance(v.data, dict):
        raise ScenarioError(["scenario file must be a YAML mapping; required keys: "
                             "kind, dt, duration, network, controller (single_bus)"])
    data = v.data
    v.check_unknown(data, "", _TOP_KEYS)

    name = v.string(data, "name", "name", default=path.stem)
    kind = v.string(data, "kind", "kind", required=True,
                    choices={"single_bus", "network"})
    dt = v.number(data, "dt", "dt", required=True, exclusive_min=0.0)
    duration = v.number(data, "duration", "duration", required=True, exclusive_min=0.0)
    if dt is not None and duration is not None and duration < dt:
        v.fail("duration", f"must be >= dt ({dt}), got {duration}")
    seed = v.integer(data, "seed", "seed", default=0)
    outputs = data.get("outputs") or {}
    v.check_unknown(outputs, "outputs", {"plots"})
    plots = bool(outputs.get("plots", True))
    events = _parse_events(v, data.get("events"), "events")

    if kind == "single_bus":
        net_block = v.mapping(data, "network", "network")
        filt = None
        e_inf = (1.0, 0.0)
        omega = 1.0
        if net_block is not None:
            v.check_unknown(net_block, "network", {"filter", "omega", "grid_voltage"})
            fblock = v.mapping(net_block, "filter", "network.filter")
            omega = v.number(net_block, "omega", "network.omega", default=1.0,
                             exclusive_min=0.0)
            e_inf = v.dq_pair(net_block, "grid_voltage", "network.grid_voltage",
                              required=False, default=(1.0, 0.0))
            if fblock is not None:
                v.check_unknown(fblock, "network.filter", {"r_f", "l_f", "c_f", "r_g", "l_g"})
                vals = {}
                for key in ("r_f", "l_f", "c_f", "r_g", "l_g"):
                    vals[key] = v.number(fblock, key, f"network.filter.{key}",
                                         required=True, minimum=0.0)
                if all(val is not None for val in vals.values()) and not v.problems:
                    filt = FilterLineParams(omega=omega, **vals)
        ctrl_block = v.mapping(data, "controller", "controller")
        controller = None
        if ctrl_block is not None:
            ctype = v.string(ctrl_block, "type", "controller.type", required=True,
                             choices={"oc", "droop"})
            if ctype == "oc":
                cfg = _parse_oc_config(v, ctrl_block, "controller")
                controller = OcController(cfg) if cfg is not None else None
            elif ctype == "droop":
                controller = _parse_droop_spec(v, ctrl_block, "controller")
        i0 = v.dq_pair(data, "initial_current", "initial_current", required=True,
                       default=(0.0, 0.0))
        v.raise_if_failed()
        try:
            sim = SingleBusScenario(
                filter_line=filt, e_inf=DqVector(*e_inf), controller=controller,
                initial_current=list(i0), dt=dt, duration=duration, events=events,
                seed=seed,
            )
        except ConfigurationError as exc:
            raise ScenarioError([str(exc)]) from exc
        return Scenario(name=name, kind=kind, sim=sim, plots=plots, source_path=path)

    # network scenario
    if "controller" in data:
        v.fail("controller", "network scenarios configure controllers in the case file")
    if "initial_current" in data:
        v.fail("initial_current", "network runs start from the settled initialization")
    net_block = v.mapping(data, "network", "network")
    case = None
    if net_block is not None:
        v.check_unknown(net_block, "network", {"case_file"})
        case_file = v.string(net_block, "case_file", "network.case_file", required=True)
        if case_file is not None:
            case_path = (path.parent / case_file).resolve()
            if not case_path.is_file():
                v.fail("network.case_file", f"case file not found: {case_path}")
            else:
                try:
                    case = parse_case(case_path)
                except ScenarioError as exc:
                    for problem in exc.problems:
                        v.problems.append(f"{case_path.name}: {problem}")
    v.raise_if_failed()
    try:
        sim = NetworkScenario(case=case, dt=dt, duration=duration, events=events, seed=seed)
    except ConfigurationError as exc:
        raise ScenarioError([str(exc)]) from exc
    return Scenario(name=name, kind=kind, sim=sim, plots=plots, source_path=path)


def preset_path(name: str) -> Path:
    if name not in PRESET_NAMES:
        raise ScenarioError(
            [f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"]
        )
    return Path(str(resources.files("safeconv").joinpath(f"data/presets/{name}.yaml")))


def load_preset(name: str) -> Scenario:
    """Parse one of the bundled scenario presets."""
    return parse_scenario(preset_path(name))
