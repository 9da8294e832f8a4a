"""Command-line entry point.

    safeconv run <scenario.yaml> [--out DIR] [--seed N] [--no-plots]
    safeconv preset <name> [--out DIR] [--seed N] [--no-plots]
    safeconv preset --list
    safeconv region <scenario.yaml> --mode {pq,pv2,qv2} [--out DIR] [--samples N]

Exit status: 0 only for a clean run (no current-limit violations and no
controller errors); 1 otherwise; 2 for unusable input.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .dq_network import thevenin_reduce
from .errors import SafeconvError, ScenarioError
from .feasible_region import TrackingMode, sample_boundary
from .network_sim import SingleBusScenario
from .reporting import run_and_report
from .scenario import PRESET_NAMES, Scenario, load_preset, parse_scenario


def _with_seed(scn: Scenario, seed) -> Scenario:
    if seed is None:
        return scn
    return replace(scn, sim=replace(scn.sim, seed=int(seed)))


def _execute(scn: Scenario, out_dir, no_plots: bool, seed) -> int:
    scn = _with_seed(scn, seed)
    summary = run_and_report(scn, out_dir, make_figures=None if not no_plots else False)
    print(f"scenario: {summary.scenario}")
    print(f"converged: {summary.converged}"
          + (f" (settle {summary.settle_time_s:.4g} s)" if summary.converged else ""))
    for inv, term in summary.terminal.items():
        print(f"{inv}: terminal S1={term['s1']:.6g} S2={term['s2']:.6g} "
              f"max|I|={summary.max_current_pu[inv]:.6g} "
              f"osc={summary.oscillation_metric[inv]:.3g}")
    if summary.max_bus_freq_dev_hz:
        worst = max(summary.max_bus_freq_dev_hz, key=summary.max_bus_freq_dev_hz.get)
        print(f"peak bus frequency deviation: {summary.max_bus_freq_dev_hz[worst]:.4g} Hz "
              f"at bus {worst}")
    print(f"safety violations: {summary.safety_violations}, "
          f"controller errors: {summary.controller_errors}")
    print(f"outputs in {Path(out_dir).resolve()}")
    return 0 if summary.safety_violations == 0 and summary.controller_errors == 0 else 1


def _cmd_run(args) -> int:
    scn = parse_scenario(args.scenario)
    return _execute(scn, args.out or f"out_{scn.name}", args.no_plots, args.seed)


def _cmd_preset(args) -> int:
    if args.list or args.name is None:
        for name in PRESET_NAMES:
            print(name)
        return 0
    scn = load_preset(args.name)
    return _execute(scn, args.out or f"out_{scn.name}", args.no_plots, args.seed)


def _cmd_region(args) -> int:
    scn = parse_scenario(args.scenario)
    if not isinstance(scn.sim, SingleBusScenario):
        raise ScenarioError(["region sampling needs a single_bus scenario"])
    mode = {"pq": TrackingMode.PQ, "pv2": TrackingMode.PV2, "qv2": TrackingMode.QV2}[args.mode]
    net = thevenin_reduce(scn.sim.filter_line, scn.sim.e_inf)
    ctrl = scn.sim.controller
    i_max = ctrl.config.i_max if hasattr(ctrl, "config") else ctrl.params.i_max
    region = sample_boundary(mode, net, i_max, n=args.samples)
    out_dir = Path(args.out or f"out_{scn.name}")
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"region_{args.mode}.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s1", "s2"])
        for s1, s2 in region.boundary:
            writer.writerow([format(s1, ".17g"), format(s2, ".17g")])
    print(f"wrote {len(region.boundary)}-vertex polygon to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safeconv", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", help="output directory (default out_<name>)")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")
    p_run.add_argument("--no-plots", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_pre = sub.add_parser("preset", help="run a bundled scenario preset")
    p_pre.add_argument("name", nargs="?")
    p_pre.add_argument("--list", action="store_true", help="list preset names")
    p_pre.add_argument("--out")
    p_pre.add_argument("--seed", type=int)
    p_pre.add_argument("--no-plots", action="store_true")
    p_pre.set_defaults(func=_cmd_preset)

    p_reg = sub.add_parser("region", help="sample a feasible output region")
    p_reg.add_argument("scenario")
    p_reg.add_argument("--mode", required=True, choices=["pq", "pv2", "qv2"])
    p_reg.add_argument("--samples", type=int, default=720)
    p_reg.add_argument("--out")
    p_reg.set_defaults(func=_cmd_region)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print("scenario validation failed:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except SafeconvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
