"""Run execution, CSV/summary emission, and figure generation.

The per-step CSV is the ground truth artifact: every summary statistic can
be recomputed from it (plus the per-inverter current limits echoed in the
summary).  Floats are printed with 17 significant digits so parsing the file
back reproduces the in-memory values exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .feasible_region import TrackingMode, sample_boundary
from .network_sim import (
    GridVoltageScale,
    NetworkScenario,
    OcController,
    SimResult,
    SingleBusScenario,
    run_network,
    run_single_bus,
)
from .dq_network import thevenin_reduce
from .scenario import Scenario

TIMESERIES_COLUMNS = [
    "t", "inverter_id", "I_d", "I_q", "I_mag", "V_d", "V_q", "P", "Q", "V2",
    "S1", "S2", "objective", "E_hat_d", "E_hat_q", "freq_dev_hz",
]
BUS_COLUMNS = ["t", "bus_id", "V_re", "V_im", "V_mag", "freq_dev_hz"]

CONVERGENCE_STEP_TOL = 1e-6
CONVERGENCE_SUSTAIN_STEPS = 50
SAFETY_TOL = 1e-9
FINAL_WINDOW_FRACTION = 0.25


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_timeseries_csv(result: SimResult, path):
    """One row per step per inverter, fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMESERIES_COLUMNS)
        for k in range(len(result.time)):
            for j, inv_id in enumerate(result.inverter_ids):
                writer.writerow([
                    _fmt(result.time[k]), inv_id,
                    _fmt(result.i_dq[k, j, 0]), _fmt(result.i_dq[k, j, 1]),
                    _fmt(result.i_mag[k, j]),
                    _fmt(result.v_dq[k, j, 0]), _fmt(result.v_dq[k, j, 1]),
                    _fmt(result.p[k, j]), _fmt(result.q[k, j]), _fmt(result.v2[k, j]),
                    _fmt(result.s1[k, j]), _fmt(result.s2[k, j]),
                    _fmt(result.objective[k, j]),
                    _fmt(result.e_hat[k, j, 0]), _fmt(result.e_hat[k, j, 1]),
                    _fmt(result.freq_dev_hz[k, j]),
                ])


def write_bus_csv(result: SimResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BUS_COLUMNS)
        for k in range(len(result.time)):
            for j, bus_id in enumerate(result.bus_ids):
                v = result.bus_v[k, j]
                writer.writerow([
                    _fmt(result.time[k]), bus_id, _fmt(v.real), _fmt(v.imag),
                    _fmt(abs(v)), _fmt(result.bus_freq_dev_hz[k, j]),
                ])


def read_timeseries_csv(path) -> dict:
    """Parse an emitted CSV back into per-inverter column arrays."""
    by_inv: dict[str, dict[str, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TIMESERIES_COLUMNS:
            raise ScenarioError([f"unexpected CSV columns: {reader.fieldnames}"])
        for row in reader:
            cols = by_inv.setdefault(row["inverter_id"],
                                     {c: [] for c in TIMESERIES_COLUMNS if c != "inverter_id"})
            for c in cols:
                cols[c].append(float(row[c]))
    return {
        inv: {c: np.array(vals) for c, vals in cols.items()}
        for inv, cols in by_inv.items()
    }


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------

@dataclass
class RunSummary:
    scenario: str
    kind: str
    dt: float
    duration: float
    seed: int
    converged: bool
    settle_time_s: float | None
    terminal: dict
    max_current_pu: dict
    i_max: dict
    safety_violations: int
    oscillation_metric: dict
    max_freq_dev_hz: dict
    controller_errors: int
    max_bus_freq_dev_hz: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def quiet_suffix_start(i_dq: np.ndarray, step_tol: float = CONVERGENCE_STEP_TOL) -> int:
    """First step index of the maximal run-ending window with per-step
    current moves (max over inverters) below ``step_tol``."""
    if len(i_dq) < 2:
        return 0
    moves = np.linalg.norm(np.diff(i_dq, axis=0), axis=2).max(axis=1)
    k = len(moves)
    while k > 0 and moves[k - 1] < step_tol:
        k -= 1
    return k  # first quiet step index into i_dq


def summarize(result: SimResult, scenario: Scenario) -> RunSummary:
    """Compute the run summary from the recorded series."""
    n = len(result.time)
    ids = result.inverter_ids
    start = quiet_suffix_start(result.i_dq)
    quiet_len = n - 1 - start  # number of quiet steps at the end
    converged = quiet_len >= CONVERGENCE_SUSTAIN_STEPS
    settle = float(result.time[start]) if converged else None

    window = max(1, int(math.floor(n * FINAL_WINDOW_FRACTION)))
    imag = result.i_mag
    osc = {inv: float(imag[-window:, j].std()) for j, inv in enumerate(ids)}
    max_i = {inv: float(imag[:, j].max()) for j, inv in enumerate(ids)}
    i_max = {inv: float(result.i_max[j]) for j, inv in enumerate(ids)}
    violations = int(sum((imag[:, j] > result.i_max[j] + SAFETY_TOL).sum()
                         for j in range(len(ids))))
    terminal = {inv: {"s1": float(result.s1[-1, j]), "s2": float(result.s2[-1, j])}
                for j, inv in enumerate(ids)}
    max_f = {inv: float(np.abs(result.freq_dev_hz[:, j]).max())
             for j, inv in enumerate(ids)}
    bus_f = {bus: float(np.abs(result.bus_freq_dev_hz[:, j]).max())
             for j, bus in enumerate(result.bus_ids)}
    return RunSummary(
        scenario=scenario.name,
        kind=scenario.kind,
        dt=result.dt,
        duration=float(result.time[-1]) + result.dt,
        seed=scenario.sim.seed,
        converged=bool(converged),
        settle_time_s=settle,
        terminal=terminal,
        max_current_pu=max_i,
        i_max=i_max,
        safety_violations=violations,
        oscillation_metric=osc,
        max_freq_dev_hz=max_f,
        controller_errors=result.flagged_steps,
        max_bus_freq_dev_hz=bus_f,
    )


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def make_plots(result: SimResult, scenario: Scenario, out_dir: Path):
    """Optional vector figures: output-plane trajectory over the sampled
    region, and time traces.  Never required for acceptance; the CSV is the
    ground truth."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(scenario.sim, SingleBusScenario):
        sim = scenario.sim
        ctrl = sim.controller
        mode = ctrl.config.mode if isinstance(ctrl, OcController) else ctrl.mode
        i_max = float(result.i_max[0])
        net0 = thevenin_reduce(sim.filter_line, sim.e_inf)
        fig, ax = plt.subplots(figsize=(5.5, 4.6))
        region = sample_boundary(mode, net0, i_max, n=512, interior_grid=(2, 2))
        ax.fill(region.boundary[:, 0], region.boundary[:, 1], color="0.88",
                label="feasible region")
        scale = 1.0
        for ev in sim.events:
            if isinstance(ev, GridVoltageScale):
                scale *= ev.factor
        if scale != 1.0:
            net1 = net0.with_source(net0.e_dq.as_array() * scale)
            post = sample_boundary(mode, net1, i_max, n=512, interior_grid=(2, 2))
            ax.fill(post.boundary[:, 0], post.boundary[:, 1], color="gold", alpha=0.5,
                    label="post-event region")
        ax.plot(result.s1[:, 0], result.s2[:, 0], "-", lw=1.2, color="tab:blue",
                label="trajectory")
        ax.plot(result.s1[0, 0], result.s2[0, 0], "o", color="tab:green", label="start")
        ax.plot(result.s1[-1, 0], result.s2[-1, 0], "s", color="tab:red", label="end")
        labels = {TrackingMode.PQ: ("P (pu)", "Q (pu)"),
                  TrackingMode.PV2: ("P (pu)", "V^2 (pu)"),
                  TrackingMode.QV2: ("Q (pu)", "V^2 (pu)")}[mode]
        ax.set_xlabel(labels[0])
        ax.set_ylabel(labels[1])
        ax.legend(loc="best", fontsize=8)
        ax.set_title(scenario.name)
        fig.tight_layout()
        fig.savefig(out_dir / "trajectory.svg")
        plt.close(fig)

    fig, axes = plt.subplots(3, 1, figsize=(6.5, 6.5), sharex=True)
    for j, inv in enumerate(result.inverter_ids):
        axes[0].plot(result.time, result.i_mag[:, j], label=inv)
        axes[1].plot(result.time, result.s1[:, j], label=inv)
        axes[2].plot(result.time, result.freq_dev_hz[:, j], label=inv)
    axes[0].axhline(float(result.i_max.max()), ls="--", c="r", lw=0.8)
    axes[0].set_ylabel("|I| (pu)")
    axes[1].set_ylabel("S1 (pu)")
    axes[2].set_ylabel("freq dev (Hz)")
    axes[2].set_xlabel("t (s)")
    if len(result.inverter_ids) > 1:
        axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "timeseries.svg")
    plt.close(fig)

    if result.bus_ids:
        fig, axes = plt.subplots(2, 1, figsize=(6.5, 5.2), sharex=True)
        for j, bus in enumerate(result.bus_ids):
            axes[0].plot(result.time, np.abs(result.bus_v[:, j]), lw=0.9, label=bus)
            axes[1].plot(result.time, result.bus_freq_dev_hz[:, j], lw=0.9, label=bus)
        axes[0].set_ylabel("|V| (pu)")
        axes[1].set_ylabel("freq dev (Hz)")
        axes[1].set_xlabel("t (s)")
        axes[0].legend(fontsize=7, ncol=4)
        fig.tight_layout()
        fig.savefig(out_dir / "bus_timeseries.svg")
        plt.close(fig)


# ---------------------------------------------------------------------------
# entry point used by the CLI
# ---------------------------------------------------------------------------

def run_and_report(scenario: Scenario, out_dir, make_figures: bool | None = None) -> RunSummary:
    """Execute a scenario; write timeseries.csv, summary.json, and figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(scenario.sim, NetworkScenario):
        result = run_network(scenario.sim)
    else:
        result = run_single_bus(scenario.sim)
    write_timeseries_csv(result, out_dir / "timeseries.csv")
    if result.bus_ids:
        write_bus_csv(result, out_dir / "bus_timeseries.csv")
    summary = summarize(result, scenario)
    (out_dir / "summary.json").write_text(summary.to_json() + "\n")
    if make_figures is None:
        make_figures = scenario.plots
    if make_figures:
        make_plots(result, scenario, out_dir)
    return summary
