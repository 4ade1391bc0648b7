####################################
#   mcfqkd : command line          #
####################################

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from qkd_logic import fileio, settings
from qkd_logic.errors import CalibrationFailure, CapacityError, ConfigParseError, DomainError, McfQkdError, SweepPointError
from qkd_logic.fibergrid import validate_plan
from qkd_logic.planner import assign_channels, compare_planners, plan_cost
from qkd_logic.qkdrate import secure_key_rate
from qkd_logic.scenario import Curve, run_sweep, summarize
from qkd_logic.xtmodel import calibrate, fit_linearity
from FrontEnd.run_config import RunConfig, load_run_config

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CALIBRATION = 3


def _out_path(out_dir: str, name: str) -> str:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ConfigParseError(f"cannot create output directory: {e.strerror or e}", path=out_dir)
    return os.path.join(out_dir, name)


def format_summary(summary: Dict[str, Dict]) -> str:
    lines = [f"reach_km.{label}={reach:g}" for label, reach in summary["reach_km"].items()]
    for pair, x in summary["crossovers"].items():
        lines.append(f"crossover.{pair}={'none' if x is None else format(x, '.6g')}")
    for label, penalty in summary["xt_penalty_bps"].items():
        lines.append(f"xt_penalty_bps.{label}={penalty:.6g}")
    return "\n".join(lines) + "\n"


#### SUBCOMMANDS ####

def cmd_plan(config: RunConfig, out_dir: str, exhaustive: bool = False) -> int:
    """Plan a demand (demand_file) or validate an existing plan (plan_file)"""
    if config.has_demand:
        topology = fileio.read_topology(config.doc)
        grid = fileio.read_grid(config.doc)
        model = config.model if config.has_model else None

        if exhaustive:
            greedy, plan, gap = compare_planners(config.demand, topology, grid, model, workers=config.workers)
            print(f"Greedy cost {plan_cost(greedy, model):.6g}, exhaustive optimum {plan_cost(plan, model):.6g}, gap {gap:.3g}")
        else:
            plan = assign_channels(config.demand, topology, grid, model)
    else:
        plan = config.plan

    violations = validate_plan(plan)
    if config.has_demand:
        fileio.write_plan(plan, _out_path(out_dir, "plan.plan"), config.config_sha256)

    print(f"Quantum core: {plan.quantum_core}")
    for a in plan.assignments:
        power = "" if a.launch_power_dbm is None else f" {a.launch_power_dbm:g} dBm"
        print(f"  core {a.core}: {a.role.value:<9} {a.freq_ghz} GHz {a.direction.value}{power}")
    if violations:
        for violation in violations:
            print(f"❌ {violation}")
        return EXIT_VALIDATION
    print("✅ Plan passes validation")
    return EXIT_OK


def cmd_calibrate(config: RunConfig, out_dir: str) -> int:
    records = fileio.read_measurements(config.calibration_csv)
    try:
        model = calibrate(records, config.dark_floor_cps)
    except DomainError as e:
        raise CalibrationFailure(f"calibration rejected the measurements [{e.field}]: {e}") from e

    fileio.write_model(model, _out_path(out_dir, "model.model"), fileio.file_sha256(config.calibration_csv))

    print(f"chi_co      = {model.chi_co:.6g} c/s/mW/km")
    print(f"chi_counter = {model.chi_counter:.6g} c/s/mW/km")
    for name in ("chi_co_filtered", "chi_counter_filtered"):
        if getattr(model, name) is not None:
            print(f"{name} = {getattr(model, name):.6g} c/s/mW/km")

    groups: Dict[tuple, List] = {}
    for rec in records:
        groups.setdefault((rec.direction.value, tuple(sorted(rec.active_cores)), rec.filter_loss_db), []).append(rec)
    for (direction, cores, loss), group in sorted(groups.items()):
        if len({r.launch_power_dbm for r in group}) >= 3:
            _, _, r_squared = fit_linearity(group)
            print(f"  {direction} cores {'+'.join(map(str, cores))} filter {loss:g} dB: r² = {r_squared:.6f}")
    for flag in model.flags:
        print(f"⚠️ {flag}")
    return EXIT_OK


def cmd_predict(config: RunConfig, out_dir: str) -> int:
    scenario = config.scenario
    result = secure_key_rate(scenario, config.model, config.params)
    label = scenario.direction.value if scenario.direction is not None else "plan"
    if scenario.extra_filter is not None:
        label += "+filter"

    frame = fileio.link_results_frame([result], [scenario.length_km], label)
    fileio.write_with_footer(_out_path(out_dir, "predict.csv"), fileio.format_frame(frame), config.config_sha256)

    print(f"SKR:  {result.skr_bps / 1e3:.3f} kbps")
    print(f"QBER: {result.qber:.3%}")
    print(f"IC-XT: {result.xt_pcr_cps:.4g} c/s")
    return EXIT_OK


def cmd_sweep(config: RunConfig, out_dir: str) -> int:
    curves = run_sweep(config.sweep_spec, config.model, config.params, workers=config.workers)
    fileio.write_sweep_csv(curves, _out_path(out_dir, "sweep.csv"), config.config_sha256)
    return _emit_summary(curves, config, out_dir, "summary.txt")


def cmd_report(config: RunConfig, out_dir: str) -> int:
    path = config.sweep_csv or os.path.join(out_dir, "sweep.csv")
    curves = fileio.read_sweep_csv(path)
    return _emit_summary(curves, config, out_dir, "report.txt")


def _emit_summary(curves: List[Curve], config: RunConfig, out_dir: str, name: str) -> int:
    text = format_summary(summarize(curves, config.crossover_pairs))
    fileio.write_with_footer(_out_path(out_dir, name), text, config.config_sha256)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


#### ENTRY POINT ####

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcfqkd",
        description="QKD / classical coexistence planner and simulator for multicore fiber",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="run description (key=value file)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--exhaustive-planner", action="store_true",
                        help="plan by exhaustive search and report the greedy gap")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else getattr(logging, settings.log_level(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config = load_run_config(args.config)
        if args.command == "plan":
            return cmd_plan(config, args.out, args.exhaustive_planner)
        return COMMANDS[args.command](config, args.out)
    except ConfigParseError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_IO
    except CalibrationFailure as e:
        print(f"❌ Calibration failed: {e}", file=sys.stderr)
        return EXIT_CALIBRATION
    except CapacityError as e:
        print(f"❌ {e} (shortfall {e.shortfall})", file=sys.stderr)
        return EXIT_VALIDATION
    except SweepPointError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except McfQkdError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
