"""Scenario engine: single-converter-infinite-bus and multi-converter runs.

Both simulators share the quasi-static phasor abstraction: every step is an
algebraic network solve, controllers act between solves, and time enters
only through the control-loop period and the event schedule.

Single-bus runs drive one controller (optimal or droop) against the
Thevenin-reduced plant.  Multi-bus runs solve a nodal admittance model in
which each converter is a controlled current injection behind its filter;
all controllers read the same network snapshot, then their commands are
applied simultaneously (a synchronous update).  Loads are converted to
constant shunt admittances so every step stays one linear solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .dq_network import (
    DqVector,
    EquivalentNetwork,
    FilterLineParams,
    _as_dq_array,
    compute_outputs,
    terminal_voltage,
    thevenin_reduce,
)
from .droop_controller import DroopParams, droop_initial_state, droop_step
from .errors import ConfigurationError, NumericalError
from .feasible_region import TrackingMode
from .sdp_controller import (
    ControllerConfig,
    ControllerState,
    controller_step,
    initial_state,
)

KCL_TOL = 1e-10
_PREROLL_QUIET = 1e-8
_PREROLL_CAP = 8000
_EVENT_TIME_SLACK = 1e-9


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetpointChange:
    """Retarget one inverter (by id) or all (inverter=None); None keeps a setpoint."""

    time: float
    s1: Optional[float] = None
    s2: Optional[float] = None
    inverter: Optional[str] = None


@dataclass(frozen=True)
class GridVoltageScale:
    """Scale the infinite-bus / slack voltage magnitude by ``factor``."""

    time: float
    factor: float


@dataclass(frozen=True)
class NoiseBurst:
    """Start decaying Gaussian noise on the controllers' source-voltage measurement.

    Per-component variance ``variance0 * exp(-(t - t_start) / tau)``; the
    draws perturb the terminal-voltage measurement seen by the optimal
    controller's estimator (the droop baseline never measures the source).
    """

    time: float
    variance0: float
    tau: float


Event = Union[SetpointChange, GridVoltageScale, NoiseBurst]


def validate_events(events) -> tuple:
    evs = tuple(events)
    times = [e.time for e in evs]
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ConfigurationError("event times must be nondecreasing")
    if any(t < 0 for t in times):
        raise ConfigurationError("event times must be >= 0")
    return evs


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OcController:
    config: ControllerConfig


@dataclass(frozen=True)
class DroopControllerSpec:
    params: DroopParams
    mode: TrackingMode
    s1_setpoint: float
    s2_setpoint: float


@dataclass(frozen=True)
class SingleBusScenario:
    filter_line: FilterLineParams
    e_inf: DqVector
    controller: Union[OcController, DroopControllerSpec]
    initial_current: np.ndarray
    dt: float
    duration: float
    events: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.duration < self.dt:
            raise ConfigurationError("duration must cover at least one step")
        object.__setattr__(self, "events", validate_events(self.events))
        object.__setattr__(self, "initial_current", _as_dq_array(self.initial_current))


@dataclass(frozen=True)
class BusSpec:
    id: str
    kind: str = "passive"  # slack | inverter | passive
    load: complex = 0j     # complex power drawn at the bus (pu)
    shunt: complex = 0j    # fixed shunt admittance (pu)

    def __post_init__(self):
        if self.kind not in ("slack", "inverter", "passive"):
            raise ConfigurationError(f"unknown bus kind {self.kind!r} on bus {self.id}")


@dataclass(frozen=True)
class BranchSpec:
    from_bus: str
    to_bus: str
    r: float
    x: float
    shunt_b: float = 0.0  # total line-charging susceptance

    def __post_init__(self):
        if self.r < 0:
            raise ConfigurationError(f"branch {self.from_bus}-{self.to_bus}: r must be >= 0")
        if self.r == 0 and self.x == 0:
            raise ConfigurationError(
                f"branch {self.from_bus}-{self.to_bus}: impedance must be nonzero"
            )


@dataclass(frozen=True)
class InverterAttachment:
    bus: str
    filter_r: float
    filter_x: float
    config: ControllerConfig

    def __post_init__(self):
        if self.filter_r == 0 and self.filter_x == 0:
            raise ConfigurationError(f"inverter at bus {self.bus}: filter impedance is singular")


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple
    branches: tuple
    inverters: tuple
    slack_voltage: complex = 1.06 + 0j

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "inverters", tuple(self.inverters))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigurationError(f"duplicate bus ids: {dup}")
        slacks = [b.id for b in self.buses if b.kind == "slack"]
        if len(slacks) != 1:
            raise ConfigurationError(f"exactly one slack bus required, found {slacks}")
        known = set(ids)
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise ConfigurationError(f"branch references unknown bus {end!r}")
        for inv in self.inverters:
            if inv.bus not in known:
                raise ConfigurationError(f"inverter references unknown bus {inv.bus!r}")
        # connectivity over the branch graph
        adj = {i: set() for i in ids}
        for br in self.branches:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        seen = {slacks[0]}
        stack = [slacks[0]]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if seen != known:
            raise ConfigurationError(f"network graph is disconnected: unreachable {sorted(known - seen)}")

    @property
    def slack_id(self) -> str:
        return next(b.id for b in self.buses if b.kind == "slack")


@dataclass(frozen=True)
class NetworkScenario:
    case: NetworkCase
    dt: float
    duration: float
    events: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.duration < self.dt:
            raise ConfigurationError("duration must cover at least one step")
        object.__setattr__(self, "events", validate_events(self.events))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class SimResult:
    """Column-oriented time series of one run.

    Per-inverter arrays are indexed (step, inverter); bus arrays are empty
    for single-bus runs.  ``freq_dev_hz`` is the retroactive derivative of
    the terminal-voltage angle.
    """

    dt: float
    time: np.ndarray
    inverter_ids: list
    i_dq: np.ndarray
    v_dq: np.ndarray
    p: np.ndarray
    q: np.ndarray
    v2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    objective: np.ndarray
    e_hat: np.ndarray
    freq_dev_hz: np.ndarray
    i_max: np.ndarray
    flagged_steps: int = 0
    bus_ids: list = field(default_factory=list)
    bus_v: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), complex))
    bus_freq_dev_hz: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def i_mag(self) -> np.ndarray:
        return np.linalg.norm(self.i_dq, axis=2)


def frequency_trace(phasors, dt: float) -> np.ndarray:
    """Frequency deviation (Hz) from a complex phasor time series.

    Unwraps the angle along time, then central differences over 2*dt
    (one-sided at the ends), divided by 2 pi.  Accepts (T,) or (T, n).
    """
    ph = np.asarray(phasors)
    if ph.shape[0] < 3:
        raise ValueError("need at least 3 samples to differentiate")
    ang = np.unwrap(np.angle(ph), axis=0)
    out = np.empty(ang.shape)
    out[1:-1] = (ang[2:] - ang[:-2]) / (2.0 * dt)
    out[0] = (ang[1] - ang[0]) / dt
    out[-1] = (ang[-1] - ang[-2]) / dt
    return out / (2.0 * math.pi)


class _NoiseSchedule:
    """Decaying-variance Gaussian noise on measured dq pairs, seeded once per run."""

    def __init__(self, rng):
        self.rng = rng
        self.t_start = None
        self.variance0 = 0.0
        self.tau = 1.0

    def start(self, t: float, variance0: float, tau: float):
        self.t_start = t
        self.variance0 = variance0
        self.tau = tau

    def sample(self, t: float) -> np.ndarray:
        if self.t_start is None:
            return np.zeros(2)
        var = self.variance0 * math.exp(-(t - self.t_start) / self.tau)
        return self.rng.normal(0.0, math.sqrt(max(var, 0.0)), size=2)


# ---------------------------------------------------------------------------
# single-bus simulation
# ---------------------------------------------------------------------------

def run_single_bus(scenario: SingleBusScenario) -> SimResult:
    """Fixed-step loop on the Thevenin plant.

    Per step: fire due events, measure the plant at the applied current,
    step the controller, apply its command.  Controller failures never abort
    the run: the previous current is held and the step is counted in
    ``flagged_steps``.
    """
    net_true = thevenin_reduce(scenario.filter_line, scenario.e_inf)
    net_model = net_true  # impedance assumed known; source handled by the estimator
    n_steps = int(round(scenario.duration / scenario.dt))
    dt = scenario.dt
    rng = np.random.default_rng(scenario.seed)
    noise = _NoiseSchedule(rng)

    is_oc = isinstance(scenario.controller, OcController)
    if is_oc:
        cfg = scenario.controller.config
        state = initial_state(scenario.initial_current, net_true.e_dq, cfg.i_max)
        mode = cfg.mode
        i_max = cfg.i_max
    else:
        spec = scenario.controller
        d_state = droop_initial_state(scenario.initial_current, net_true)
        d_setpoints = (spec.s1_setpoint, spec.s2_setpoint)
        mode = spec.mode
        i_max = spec.params.i_max

    pair_index = {
        TrackingMode.PQ: (0, 1),
        TrackingMode.PV2: (0, 2),
        TrackingMode.QV2: (1, 2),
    }[mode]

    tgrid = np.arange(n_steps) * dt
    i_arr = np.zeros((n_steps, 1, 2))
    v_arr = np.zeros((n_steps, 1, 2))
    pqv = np.zeros((n_steps, 1, 3))
    obj = np.zeros((n_steps, 1))
    ehat = np.zeros((n_steps, 1, 2))
    flagged = 0

    i_applied = scenario.initial_current.copy()
    ev_ptr = 0
    events = scenario.events
    for k in range(n_steps):
        t = k * dt
        while ev_ptr < len(events) and events[ev_ptr].time <= t + _EVENT_TIME_SLACK:
            ev = events[ev_ptr]
            ev_ptr += 1
            if isinstance(ev, SetpointChange):
                if is_oc:
                    cfg = cfg.with_setpoints(
                        cfg.s1_setpoint if ev.s1 is None else ev.s1,
                        cfg.s2_setpoint if ev.s2 is None else ev.s2,
                    )
                else:
                    d_setpoints = (
                        d_setpoints[0] if ev.s1 is None else ev.s1,
                        d_setpoints[1] if ev.s2 is None else ev.s2,
                    )
            elif isinstance(ev, GridVoltageScale):
                net_true = net_true.with_source(net_true.e_dq.as_array() * ev.factor)
            elif isinstance(ev, NoiseBurst):
                noise.start(t, ev.variance0, ev.tau)

        v_true = terminal_voltage(i_applied, net_true).as_array()
        p, q, v2 = compute_outputs(i_applied, net_true)

        i_arr[k, 0] = i_applied
        v_arr[k, 0] = v_true
        pqv[k, 0] = (p, q, v2)

        if is_oc:
            v_meas = v_true + noise.sample(t)
            try:
                state, res = controller_step(state, v_meas, i_applied, cfg, net_model)
                if res.extraction_failed:
                    flagged += 1
                obj[k, 0] = res.objective
                i_next = res.i_command
            except NumericalError:
                flagged += 1
                obj[k, 0] = obj[k - 1, 0] if k else 0.0
                i_next = i_applied
            ehat[k, 0] = state.e_hat
        else:
            s1m = pqv[k, 0, pair_index[0]]
            s2m = pqv[k, 0, pair_index[1]]
            obj[k, 0] = (0.5 * (s1m - d_setpoints[0]) ** 2
                         + 0.5 * (s2m - d_setpoints[1]) ** 2)
            ehat[k, 0] = net_true.e_dq.as_array()
            d_state, i_next = droop_step(
                d_state, (p, q, v2), d_setpoints, spec.params, net_true, dt, mode
            )
        i_applied = np.asarray(i_next, dtype=float)

    phasor = v_arr[:, 0, 0] + 1j * v_arr[:, 0, 1]
    freq = frequency_trace(phasor, dt)[:, None] if n_steps >= 3 else np.zeros((n_steps, 1))
    return SimResult(
        dt=dt,
        time=tgrid,
        inverter_ids=["inv1"],
        i_dq=i_arr,
        v_dq=v_arr,
        p=pqv[:, :, 0],
        q=pqv[:, :, 1],
        v2=pqv[:, :, 2],
        s1=pqv[:, :, pair_index[0]],
        s2=pqv[:, :, pair_index[1]],
        objective=obj,
        e_hat=ehat,
        freq_dev_hz=freq,
        i_max=np.array([i_max]),
        flagged_steps=flagged,
    )


# ---------------------------------------------------------------------------
# nodal network model
# ---------------------------------------------------------------------------

class NodalModel:
    """Admittance model with converter internal nodes; slack voltage eliminated."""

    def __init__(self, case: NetworkCase, load_voltages=None):
        self.case = case
        bus_ids = [b.id for b in case.buses]
        self.bus_index = {bid: i for i, bid in enumerate(bus_ids)}
        n = len(bus_ids)
        m = len(case.inverters)
        self.n_bus = n
        self.n_inv = m
        self.internal_index = {j: n + j for j in range(m)}
        size = n + m
        y = np.zeros((size, size), complex)
        for br in case.branches:
            f = self.bus_index[br.from_bus]
            t = self.bus_index[br.to_bus]
            yser = 1.0 / complex(br.r, br.x)
            half = 1j * br.shunt_b / 2.0
            y[f, f] += yser + half
            y[t, t] += yser + half
            y[f, t] -= yser
            y[t, f] -= yser
        for b in case.buses:
            y[self.bus_index[b.id], self.bus_index[b.id]] += b.shunt
        for b in case.buses:
            if b.load != 0:
                vmag2 = 1.0
                if load_voltages is not None:
                    vmag2 = abs(load_voltages[self.bus_index[b.id]]) ** 2
                y[self.bus_index[b.id], self.bus_index[b.id]] += np.conj(b.load) / vmag2
        for j, inv in enumerate(case.inverters):
            f = self.bus_index[inv.bus]
            t = self.internal_index[j]
            yf = 1.0 / complex(inv.filter_r, inv.filter_x)
            y[f, f] += yf
            y[t, t] += yf
            y[f, t] -= yf
            y[t, f] -= yf
        self.y = y
        self.slack = self.bus_index[case.slack_id]
        self.free = [i for i in range(size) if i != self.slack]
        self._lu = lu_factor(y[np.ix_(self.free, self.free)])
        self._y_free_slack = y[self.free, self.slack]

    def _assemble(self, v_free, slack_voltage) -> np.ndarray:
        v = np.empty(self.n_bus + self.n_inv, complex)
        v[self.slack] = slack_voltage
        v[self.free] = v_free
        return v

    def solve_injections(self, injections, slack_voltage) -> np.ndarray:
        """Node voltages with given current injections at converter internal nodes.

        ``injections``: complex array, one entry per inverter (current flowing
        from the converter into its internal node).
        """
        rhs = -self._y_free_slack * slack_voltage
        for j, inj in enumerate(injections):
            rhs[self.free.index(self.internal_index[j])] += inj
        v_free = lu_solve(self._lu, rhs)
        v = self._assemble(v_free, slack_voltage)
        self._check_kcl(v, injections)
        return v

    def solve_internal_voltages(self, internal_voltages, slack_voltage) -> np.ndarray:
        """Node voltages with converter internal nodes held at given voltages.

        The converter nodes act as fixed sources alongside the slack; only
        the remaining bus voltages are unknowns.
        """
        fixed = {self.slack: complex(slack_voltage)}
        for j, v_int in enumerate(internal_voltages):
            fixed[self.internal_index[j]] = complex(v_int)
        unknown = [i for i in range(self.n_bus + self.n_inv) if i not in fixed]
        a = self.y[np.ix_(unknown, unknown)]
        rhs = -sum(
            self.y[unknown, idx] * val for idx, val in fixed.items()
        )
        v_unknown = np.linalg.solve(a, rhs)
        v = np.empty(self.n_bus + self.n_inv, complex)
        for idx, val in fixed.items():
            v[idx] = val
        v[unknown] = v_unknown
        mis = self.y @ v
        resid = float(np.max(np.abs(mis[unknown])))
        if resid > KCL_TOL:
            raise NumericalError(f"KCL residual {resid:.3e} exceeds {KCL_TOL:g}", residual=resid)
        return v

    def inverter_currents(self, v) -> np.ndarray:
        """Current out of each converter's internal node through its filter."""
        out = np.empty(self.n_inv, complex)
        for j, inv in enumerate(self.case.inverters):
            yf = 1.0 / complex(inv.filter_r, inv.filter_x)
            out[j] = (v[self.internal_index[j]] - v[self.bus_index[inv.bus]]) * yf
        return out

    def _check_kcl(self, v, injections):
        mis = self.y @ v
        for j, inj in enumerate(injections):
            mis[self.internal_index[j]] -= inj
        resid = float(np.max(np.abs(np.delete(mis, self.slack))))
        if resid > KCL_TOL:
            raise NumericalError(f"KCL residual {resid:.3e} exceeds {KCL_TOL:g}", residual=resid)

    def kcl_residual(self, v, injections) -> float:
        mis = self.y @ v
        for j, inj in enumerate(injections):
            mis[self.internal_index[j]] -= inj
        return float(np.max(np.abs(np.delete(mis, self.slack))))


def build_admittance(case: NetworkCase, load_voltages=None) -> NodalModel:
    """Nodal admittance model: branches, charging, shunts, constant-admittance
    loads, and converter filter branches to internal nodes."""
    return NodalModel(case, load_voltages)


def local_thevenin(model: NodalModel, inverter_idx: int) -> EquivalentNetwork:
    """Impedance and open-circuit source seen from one converter's internal node.

    Other converters are treated as fixed current sources (open in the
    incremental sense), matching how commands enter the plant.
    """
    zero = np.zeros(model.n_inv, complex)
    unit = zero.copy()
    unit[inverter_idx] = 1.0
    v_oc = model.solve_injections(zero, model.case.slack_voltage)
    v_probe = model.solve_injections(unit, model.case.slack_voltage)
    node = model.internal_index[inverter_idx]
    z = v_probe[node] - v_oc[node]
    e_oc = v_oc[node]
    return EquivalentNetwork(
        r_eq=z.real, l_eq=z.imag, omega=1.0, e_dq=DqVector(e_oc.real, e_oc.imag)
    )


# ---------------------------------------------------------------------------
# multi-inverter simulation
# ---------------------------------------------------------------------------

def _preroll(model: NodalModel, nets, cfgs, states, slack_voltage):
    """Iterate controllers to a settled operating point; returns final voltages."""
    currents = np.array([complex(s.i_dq[0], s.i_dq[1]) for s in states])
    for _ in range(_PREROLL_CAP):
        v = model.solve_injections(currents, slack_voltage)
        i_act = model.inverter_currents(v)
        max_move = 0.0
        for j in range(model.n_inv):
            node = model.internal_index[j]
            v_meas = np.array([v[node].real, v[node].imag])
            i_meas = np.array([i_act[j].real, i_act[j].imag])
            states[j], res = controller_step(states[j], v_meas, i_meas, cfgs[j], nets[j])
            new = complex(res.i_command[0], res.i_command[1])
            max_move = max(max_move, abs(new - currents[j]))
            currents[j] = new
        if max_move < _PREROLL_QUIET:
            return model.solve_injections(currents, slack_voltage), currents
    raise ConfigurationError(
        f"initialization did not settle within {_PREROLL_CAP} iterations "
        f"(last move {max_move:.3e})"
    )


def run_network(scenario: NetworkScenario) -> SimResult:
    """Multi-inverter run on the nodal model.

    Initialization finds a settled operating point with the bundled setpoints
    (all converters started from zero current), converts loads to shunt
    admittances consistent with that solution, and settles again; the result
    is t = 0.  Each recorded step then solves the network at the applied
    currents, lets every controller react to the same snapshot, and applies
    all commands together.
    """
    case = scenario.case
    dt = scenario.dt
    n_steps = int(round(scenario.duration / dt))
    rng = np.random.default_rng(scenario.seed)
    noise = _NoiseSchedule(rng)
    slack_voltage = complex(case.slack_voltage)

    # pass 1: flat-voltage load admittances
    model = build_admittance(case)
    nets = [local_thevenin(model, j) for j in range(model.n_inv)]
    cfgs = [inv.config for inv in case.inverters]
    states = [
        initial_state(np.zeros(2), nets[j].e_dq, cfgs[j].i_max) for j in range(model.n_inv)
    ]
    v_init, currents = _preroll(model, nets, cfgs, states, slack_voltage)

    # pass 2: load admittances from the settled solution, then settle again
    model = build_admittance(case, load_voltages=v_init[: model.n_bus])
    nets = [local_thevenin(model, j) for j in range(model.n_inv)]
    v_init, currents = _preroll(model, nets, cfgs, states, slack_voltage)

    m = model.n_inv
    tgrid = np.arange(n_steps) * dt
    i_arr = np.zeros((n_steps, m, 2))
    v_arr = np.zeros((n_steps, m, 2))
    pqv = np.zeros((n_steps, m, 3))
    s1_arr = np.zeros((n_steps, m))
    s2_arr = np.zeros((n_steps, m))
    obj = np.zeros((n_steps, m))
    ehat = np.zeros((n_steps, m, 2))
    bus_v = np.zeros((n_steps, model.n_bus), complex)
    flagged = 0

    pair_cols = {TrackingMode.PQ: (0, 1), TrackingMode.PV2: (0, 2), TrackingMode.QV2: (1, 2)}

    ev_ptr = 0
    events = scenario.events
    inv_ids = [f"inv_{inv.bus}" for inv in case.inverters]
    for k in range(n_steps):
        t = k * dt
        while ev_ptr < len(events) and events[ev_ptr].time <= t + _EVENT_TIME_SLACK:
            ev = events[ev_ptr]
            ev_ptr += 1
            if isinstance(ev, SetpointChange):
                for j, inv in enumerate(case.inverters):
                    if ev.inverter is not None and ev.inverter not in (inv_ids[j], inv.bus):
                        continue
                    cfgs[j] = cfgs[j].with_setpoints(
                        cfgs[j].s1_setpoint if ev.s1 is None else ev.s1,
                        cfgs[j].s2_setpoint if ev.s2 is None else ev.s2,
                    )
            elif isinstance(ev, GridVoltageScale):
                slack_voltage *= ev.factor
            elif isinstance(ev, NoiseBurst):
                noise.start(t, ev.variance0, ev.tau)

        v = model.solve_injections(currents, slack_voltage)
        i_act = model.inverter_currents(v)
        bus_v[k] = v[: model.n_bus]

        new_currents = currents.copy()
        for j in range(m):
            node = model.internal_index[j]
            v_int = v[node]
            i_meas = np.array([i_act[j].real, i_act[j].imag])
            v_meas = np.array([v_int.real, v_int.imag])
            p = v_meas[0] * i_meas[0] + v_meas[1] * i_meas[1]
            q = v_meas[1] * i_meas[0] - v_meas[0] * i_meas[1]
            v2 = v_meas[0] * v_meas[0] + v_meas[1] * v_meas[1]
            i_arr[k, j] = i_meas
            v_arr[k, j] = v_meas
            pqv[k, j] = (p, q, v2)
            c1, c2 = pair_cols[cfgs[j].mode]
            s1_arr[k, j] = pqv[k, j, c1]
            s2_arr[k, j] = pqv[k, j, c2]
            try:
                states[j], res = controller_step(
                    states[j], v_meas + noise.sample(t), i_meas, cfgs[j], nets[j]
                )
                if res.extraction_failed:
                    flagged += 1
                obj[k, j] = res.objective
                new_currents[j] = complex(res.i_command[0], res.i_command[1])
            except NumericalError:
                flagged += 1
                obj[k, j] = obj[k - 1, j] if k else 0.0
            ehat[k, j] = states[j].e_hat
        currents = new_currents

    inv_phasors = v_arr[:, :, 0] + 1j * v_arr[:, :, 1]
    freq = frequency_trace(inv_phasors, dt) if n_steps >= 3 else np.zeros((n_steps, m))
    bus_freq = frequency_trace(bus_v, dt) if n_steps >= 3 else np.zeros((n_steps, model.n_bus))
    return SimResult(
        dt=dt,
        time=tgrid,
        inverter_ids=inv_ids,
        i_dq=i_arr,
        v_dq=v_arr,
        p=pqv[:, :, 0],
        q=pqv[:, :, 1],
        v2=pqv[:, :, 2],
        s1=s1_arr,
        s2=s2_arr,
        objective=obj,
        e_hat=ehat,
        freq_dev_hz=freq,
        i_max=np.array([c.i_max for c in cfgs]),
        flagged_steps=flagged,
        bus_ids=[b.id for b in case.buses],
        bus_v=bus_v,
        bus_freq_dev_hz=bus_freq,
    )
