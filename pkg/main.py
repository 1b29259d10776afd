#!/usr/bin/env python3
"""
flapwing command line.

Exit codes: 0 success, 1 unexpected error, 2 usage error, 3 invalid
scenario, 4 simulation aborted at runtime.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from core import __version__
from core.errors import (EXIT_OK, EXIT_RUNTIME, EXIT_UNEXPECTED, EXIT_VALIDATION, DomainError,
                         ScenarioError)


def _alpha_range(text: str):
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B:STEP in degrees, got {text!r}")
    if step <= 0:
        raise argparse.ArgumentTypeError("STEP must be positive")
    return start, stop, step


class _AlphaRangeAction(argparse.Action):
    """Accepts A:B:STEP as one token or A B STEP as three, so a negative A can follow a space."""

    def __call__(self, parser, namespace, values, option_string=None):
        try:
            setattr(namespace, self.dest, _alpha_range(":".join(values)))
        except argparse.ArgumentTypeError as e:
            parser.error(f"argument {option_string}: {e}")


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _non_negative_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must not be negative, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flapwing",
        description="CPG-driven flapping flight simulator",
        epilog="Exit codes: 0 ok, 1 unexpected error, 2 usage, 3 invalid scenario, 4 runtime abort")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more log output on stderr (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write its time series")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--duration", type=_non_negative_float, help="override sim.duration (s)")
    p.add_argument("--dt", type=_positive_float, help="override sim.dt (s)")
    p.add_argument("--stride", type=int, help="override sim.record_stride")
    p.add_argument("--summary-json", help="also write a JSON run summary here")
    p.add_argument("--xlsx", help="also write the series to an Excel workbook")
    p.add_argument("--history", action="store_true", help="record the run in the local run history")
    p.add_argument("--db", help="history database path (default ~/.flapwing/run_history.db)")

    p = sub.add_parser("analyze-sync", help="report the synchronization gain condition")
    p.add_argument("scenario")
    p.add_argument("--k", type=float, help="coupling gain to judge (default: topology.k)")
    p.add_argument("--measure", action="store_true", help="fit the decay rate from a short CPG-only run")
    p.add_argument("--seconds", type=_positive_float, default=2.0, help="length of the measuring run")

    p = sub.add_parser("coeffs", help="print the lift/drag coefficient table")
    p.add_argument("--alpha-range", nargs="+", action=_AlphaRangeAction, default=(-90.0, 90.0, 1.0),
                   metavar="A:B:STEP", help="degrees, as A:B:STEP or A B STEP (e.g. --alpha-range -90 90 1)")
    p.add_argument("--scenario", help="take the coefficient model from this scenario")
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("validate", help="parse and validate a scenario")
    p.add_argument("scenario")
    p.add_argument("--dump", action="store_true", help="print the scenario with all defaults applied")

    p = sub.add_parser("lift-study", help="mean vertical force with and without pitch synchronization")
    p.add_argument("--delta21", type=float, nargs="+", default=[90.0], help="flap-to-pitch phase (deg)")
    p.add_argument("--speed", type=_positive_float, default=5.0, help="free-stream speed (m/s)")
    p.add_argument("--omega", type=_positive_float, default=10.0, help="flapping frequency (rad/s)")
    p.add_argument("--cycles", type=int, default=10)
    p.add_argument("--dt", type=_positive_float, default=1e-3)

    p = sub.add_parser("batch", help="run several scenarios concurrently")
    p.add_argument("paths", nargs="+", help="scenario files or directories to search for *.json")
    p.add_argument("--jobs", type=int, default=2)
    p.add_argument("--out-dir", help="write <name>.csv for every run here")

    p = sub.add_parser("history", help="list recorded runs")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--clear", action="store_true", help="delete every recorded run")
    p.add_argument("--db", help="history database path")
    return parser


def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _print_lines(lines: Sequence[str], stream=None):
    stream = stream or sys.stdout
    for line in lines:
        print(line, file=stream)


def cmd_simulate(args) -> int:
    from core.analysis import summarize_flight, turn_window_from_events
    from core.exporter import CsvRowWriter, Exporter, run_metadata
    from core.scenario import parse_scenario

    scenario = parse_scenario(args.scenario)
    overrides = {}
    if args.duration is not None:
        overrides["duration"] = args.duration
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.stride is not None:
        overrides["record_stride"] = args.stride
    if overrides:
        scenario = scenario.with_sim(**overrides)
    simulation = scenario.build_simulation()
    config = simulation.config

    exporter = Exporter()
    if args.out:
        handle, writer = exporter.open_series(args.out, scenario, config.dt)
        report = sys.stdout
    else:
        handle = None
        writer = CsvRowWriter(sys.stdout, run_metadata(scenario, config.dt))
        report = sys.stderr
    try:
        result = simulation.run(writer)
    finally:
        if handle is not None:
            handle.close()

    summary = summarize_flight(result, turn_window_from_events(config.events))
    _print_lines([f"scenario        : {scenario.name} ({scenario.digest()[:12]})",
                  f"rows            : {len(result.rows)}"] + summary.lines(), report)

    record = {
        "scenario": scenario.name, "scenario_sha256": scenario.digest(), "version": __version__,
        "dt": config.dt, "duration": config.duration, "rows": len(result.rows),
        "summary": dataclasses.asdict(summary), "saturation_events": result.saturation_events,
        "wall_time": result.wall_time,
    }
    if args.summary_json:
        exporter.export_summary_json(record, args.summary_json)
    if args.xlsx:
        exporter.export_to_excel(result, args.xlsx, run_metadata(scenario, config.dt))
    if args.history:
        from core.history_manager import HistoryManager
        HistoryManager(args.db).save_run(
            scenario_name=scenario.name, scenario_sha256=scenario.digest(), duration=config.duration,
            dt=config.dt, rows=len(result.rows), transitions=len(result.transitions),
            status="aborted" if result.aborted else "ok", summary=record,
            scenario_path=str(Path(args.scenario).resolve()), output_path=args.out)

    if result.aborted:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_analyze_sync(args) -> int:
    from core.analysis import measure_decay, sync_report
    from core.scenario import parse_scenario

    scenario = parse_scenario(args.scenario)
    topo = scenario.network_topology()
    lam = scenario.oscillators.lambda_flap
    report = sync_report(topo, scenario.radii(), lam, k=args.k)
    if args.measure:
        report.measured_rate = measure_decay(topo.with_gain(report.k), scenario.radii(), lam,
                                             omega=scenario.oscillators.omega0, duration=args.seconds,
                                             dt=scenario.sim.dt, seed=scenario.oscillators.seed)
    _print_lines(report.lines())
    return EXIT_OK


def cmd_coeffs(args) -> int:
    from core.aerodynamics import AeroModel, coefficient_table
    from core.exporter import Exporter

    model = AeroModel()
    if args.scenario:
        from core.scenario import parse_scenario
        model = parse_scenario(args.scenario).aero_model()
    start, stop, step = args.alpha_range
    rows = coefficient_table(start, stop, step, model.coefficients)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            Exporter().export_coefficients(rows, f)
    else:
        Exporter().export_coefficients(rows, sys.stdout)
    return EXIT_OK


def cmd_validate(args) -> int:
    from core.scenario import parse_scenario

    scenario = parse_scenario(args.scenario)
    scenario.build_simulation()
    if args.dump:
        print(scenario.to_json())
    else:
        print(f"{args.scenario}: ok ({scenario.n} oscillators, {len(scenario.topology.edges)} edges, "
              f"{len(scenario.events)} events, sha256 {scenario.digest()[:12]})")
    return EXIT_OK


def cmd_lift_study(args) -> int:
    from core.analysis import phase_sweep

    studies = phase_sweep(args.delta21, speed=args.speed, omega=args.omega, cycles=args.cycles, dt=args.dt)
    print("delta21_deg,mean_lift_synchronized_N,mean_lift_baseline_N,ratio")
    for s in studies:
        print(f"{s.delta21_deg!r},{s.mean_lift_synchronized!r},{s.mean_lift_baseline!r},{s.ratio!r}")
    return EXIT_OK


def _expand_paths(paths: Sequence[str]) -> List[str]:
    from core.scanner import Scanner

    scanner = Scanner()
    found: List[str] = []
    for p in paths:
        if Path(p).is_dir():
            found += [str(f) for f in scanner.scan_directory(p)]
        else:
            found.append(p)
    return found


def cmd_batch(args) -> int:
    from core.task_manager import TaskStatus, run_batch

    paths = _expand_paths(args.paths)
    if not paths:
        print("no scenario files found", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    tasks = run_batch(paths, max_concurrent=max(1, args.jobs), out_dir=out_dir)
    code = EXIT_OK
    for task in tasks:
        s = task.get_summary()
        detail = task.error_message or task.results.get("aborted") or f"{s['transitions']} transitions"
        print(f"{task.target}: {s['status']} ({s['elapsed_time']:.2f}s) {detail}")
        if task.status is TaskStatus.ERROR:
            code = max(code, EXIT_VALIDATION)
        elif task.results.get("aborted"):
            code = max(code, EXIT_RUNTIME)
    return code


def cmd_history(args) -> int:
    from core.history_manager import HistoryManager

    history = HistoryManager(args.db)
    if args.clear:
        print(f"deleted {history.clear_history()} runs")
        return EXIT_OK
    for run in history.get_recent_runs(limit=args.limit):
        print(f"#{run['id']:<4} {run['run_date'][:19]}  {run['scenario_name']:<20} {run['status']:<8} "
              f"{run['duration']:g}s  {run['transitions']} transitions  {run['scenario_sha256'][:12]}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze-sync": cmd_analyze_sync,
    "coeffs": cmd_coeffs,
    "validate": cmd_validate,
    "lift-study": cmd_lift_study,
    "batch": cmd_batch,
    "history": cmd_history,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nflapwing interrupted by user.")
        sys.exit(EXIT_OK)
    except Exception as e:
        print(f"Unexpected error: {e}")
        sys.exit(EXIT_UNEXPECTED)
