#!/usr/bin/env python3
"""
CLI for the soliton-train computing simulator
Supports: simulate, calibrate, compute, and selftest commands
"""
import math
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import argparse
import logging
from dotenv import load_dotenv
from solitrain.config import SimulationConfig, configure_logging, load_run_config, load_settings
from solitrain.errors import ConfigError, NumericalBlowUpError, SolitrainError
from solitrain.services.calculator import compile_plan, run_plan
from solitrain.services.calibration import calibrate
from solitrain.services.detection import detect_dips, detect_events, measure_frequency
from solitrain.services.diagnostics import run_selftest
from solitrain.services.evolution import evolve
from solitrain.services.protocol import effective_ratio
from solitrain.storage.backends import create_table_backend
from solitrain.storage.exports import (
    write_density_binary, write_density_csv, write_detector_series, write_event_log, write_json_report,
)

logger = logging.getLogger("solitrain.cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_DECODE_RANGE = 3


def parse_s_values(s_list: Optional[str], s_range: Optional[str]) -> List[float]:
    """
    Ratios from --s-list "2.4,2.8,3.2" or --s-range "start:stop:step" (stop inclusive)

    Raises:
        ConfigError: If neither or both are given, or the values do not parse
    """
    if bool(s_list) == bool(s_range):
        raise ConfigError("give exactly one of --s-list or --s-range")
    try:
        if s_list:
            return [float(item) for item in s_list.split(",") if item.strip()]
        start, stop, step = (float(item) for item in s_range.split(":"))
    except ValueError:
        raise ConfigError(f"cannot parse s values from {s_list or s_range!r}")
    if not step > 0 or stop < start:
        raise ConfigError(f"--s-range needs start <= stop and step > 0, got {s_range!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(count)]


def load_simulation_config(args) -> SimulationConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config).simulation
    return SimulationConfig()


def cmd_simulate(args, settings) -> int:
    """Handle 'simulate' command - run one config and export densities, events and frequency"""
    run_config = load_run_config(args.config)
    simulation, schedule = run_config.simulation, run_config.schedule
    out_dir = Path(args.out or settings.output_dir)
    component = args.component
    if not 0 <= component < schedule.n_components:
        raise ConfigError(f"--component {component} out of range for {schedule.n_components} component(s)")

    print(f"Simulating {args.config} ({schedule.n_components} component(s), "
          f"t_final={simulation.evolution.t_final}, dt={simulation.evolution.dt})...")
    g_right = schedule.self_g[0].right
    state = simulation.initial_state(schedule.n_components, g=g_right if g_right > 0 else 1.0)

    exit_code = EXIT_OK
    blow_up_time = None
    try:
        trajectory = evolve(state, schedule, simulation.evolution, simulation.detector.z_d,
                            progress_callback=lambda stage, message: logger.debug(f"{stage}: {message}"))
        events = detect_events(trajectory, component, simulation.detector)
    except NumericalBlowUpError as e:
        print(f"✗ {e}")
        trajectory, blow_up_time, exit_code = e.trajectory, e.time, EXIT_NUMERICAL
        t_start, t_end = simulation.detector.resolve_window(simulation.evolution.t_final)
        t_end = min(t_end, trajectory.t_end)
        events = detect_dips(trajectory.line_times, trajectory.line_samples[component],
                             simulation.detector, (t_start, max(t_end, t_start)))

    frequency = measure_frequency(events)
    if args.binary:
        density_path = write_density_binary(out_dir / f"density_c{component}.bin", trajectory, component)
    else:
        density_path = write_density_csv(out_dir / f"density_c{component}.csv", trajectory, component)
    print(f"✓ Density matrix: {density_path}")
    print(f"✓ Detector series: {write_detector_series(out_dir / 'detector.csv', trajectory)}")
    print(f"✓ Event log: {write_event_log(out_dir / f'events_c{component}.csv', events)}")

    try:
        s_eff = effective_ratio(schedule, component).value
    except SolitrainError:
        s_eff = None
    report = {
        "config": simulation.to_dict(),
        "schedule": schedule.to_dict(),
        "component": component,
        "s_eff": s_eff,
        "frequency": frequency.to_dict(),
        "window": list(events.window),
        "blow_up": blow_up_time is not None,
        "blow_up_time": blow_up_time,
        "fingerprint": simulation.fingerprint(),
    }
    print(f"✓ Frequency report: {write_json_report(out_dir / 'frequency.json', report)}")
    print(f"\nf = {frequency.f:.6f} ({frequency.count} events in window "
          f"[{events.window[0]:.2f}, {events.window[1]:.2f}])")
    return exit_code


def cmd_calibrate(args, settings) -> int:
    """Handle 'calibrate' command - sweep s values and write a calibration table"""
    s_values = parse_s_values(args.s_list, args.s_range)
    simulation = load_simulation_config(args)
    max_workers = args.max_workers or settings.max_workers

    table = calibrate(s_values, args.branch, simulation, max_workers=max_workers)
    backend = create_table_backend(table_dir=str(settings.table_dir))
    path = backend.save_table(table, args.out or f"table_{args.branch}.csv")

    print(f"\n{'s':>10} {'f':>12}")
    print(f"{'-' * 23}")
    for s, f in table.samples:
        print(f"{s:>10.4f} {f:>12.6f}")
    if table.gap_samples:
        print(f"Gap samples (blow-up): {', '.join(f'{s:.4f}' for s in table.gap_samples)}")
    print(f"\n✓ Table written to {path}")
    return EXIT_OK


def cmd_compute(args, settings) -> int:
    """Handle 'compute' command - compile, simulate and decode an arithmetic request"""
    simulation = load_simulation_config(args)
    plan = compile_plan(args.op, args.operands, g_right=args.g_right, crit=simulation.crit)
    strict = settings.strict_fingerprint and not args.warn_fingerprint

    table = None
    if args.table:
        backend = create_table_backend(table_dir=str(settings.table_dir))
        table = backend.load_table(args.table)
    else:
        print("No --table given: measuring frequency only, nothing will be decoded")

    result = run_plan(plan, table, simulation, strict=strict)
    report_path = Path(args.out) if args.out else Path(settings.output_dir) / f"compute_{plan.operation}.json"
    write_json_report(report_path, result.to_report())

    print(f"\nOperation: {plan.operation} {list(plan.operands)}")
    if plan.expected_s_eff is not None:
        print(f"s_eff: {plan.expected_s_eff:.6f} (branch {plan.branch})")
    print(f"f: {result.f_measured.f:.6f} ({result.f_measured.count} events)")
    if result.decoded is not None:
        label = " (indicative)" if result.indicative else ""
        print(f"decoded: {result.decoded:.6f}{label}")
    print(f"order_check: {str(result.order_check).lower()}")
    print(f"✓ Report written to {report_path}")

    if result.diagnostics.get("blow_up"):
        if result.diagnostics.get("truncated"):
            print(f"✗ Numerical blow-up at t={result.diagnostics['blow_up_time']:.3f}; decoded from the truncated run")
        else:
            print("✗ Numerical blow-up during the run; no decoded value")
        return EXIT_NUMERICAL
    if result.diagnostics.get("out_of_range"):
        print(f"✗ {result.diagnostics['note']}")
        return EXIT_DECODE_RANGE
    return EXIT_OK


def cmd_selftest(args, settings) -> int:
    """Handle 'selftest' command - conservation, oracle, reduction, convergence and absorber suites"""
    print(f"Running self-test ({'quick' if args.quick else 'full'}"
          f"{f', dt={args.dt}' if args.dt is not None else ''})...\n")
    results = run_selftest(quick=args.quick, dt=args.dt)
    for result in results:
        mark = "✓" if result.passed else "✗"
        print(f"{mark} {result.name:<14} {result.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"\n{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_VALIDATION
    print("\nAll checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Soliton-train computing simulator CLI",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Simulate a ready-made scenario and export densities
  python cli.py simulate configs/interaction_quench.yaml --out ./output/quench

  # Same, with a raw binary density matrix
  python cli.py simulate configs/combined_quench.yaml --binary

  # Calibrate branch r
  python cli.py calibrate --branch r --s-range 2.6:4.6:0.25 --out tables/table_r.csv

  # Add two numbers against that table
  python cli.py compute --op add 1.0 0.6 --table tables/table_r.csv

  # Method B ordering check
  python cli.py compute --op method-b 2.2 0.7

  # Quick self-test
  python cli.py selftest --quick
        """
    )
    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # SIMULATE command
    simulate_parser = subparsers.add_parser('simulate', help='Run one config and export the results')
    simulate_parser.add_argument('config', help='YAML run-config file')
    simulate_parser.add_argument('--out', help='Output directory (default: SOLITON_OUTPUT_DIR or ./output)')
    simulate_parser.add_argument('--binary', action='store_true',
                                 help='Write the density matrix as little-endian float64 with a sidecar header')
    simulate_parser.add_argument('--component', type=int, default=0,
                                 help='Component to export and detect on (default: 0)')

    # CALIBRATE command
    calibrate_parser = subparsers.add_parser('calibrate', help='Build a frequency calibration table')
    calibrate_parser.add_argument('--branch', choices=['r', 'ra'], default='r', help='Branch (default: r)')
    calibrate_parser.add_argument('--s-list', help='Comma-separated ratios, e.g. "2.4,2.8,3.2"')
    calibrate_parser.add_argument('--s-range', help='start:stop:step, stop inclusive, e.g. "2.4:4.0:0.4"')
    calibrate_parser.add_argument('--config', help='YAML run-config file (schedule section is ignored)')
    calibrate_parser.add_argument('--out', help='Table file (default: SOLITON_TABLE_DIR/table_<branch>.csv)')
    calibrate_parser.add_argument('--max-workers', type=int, help='Parallel runs (default: SOLITON_MAX_WORKERS or 4)')

    # COMPUTE command
    compute_parser = subparsers.add_parser('compute', help='Run an arithmetic operation')
    compute_parser.add_argument('--op', required=True,
                                choices=['store', 'add', 'mul', 'sum3', 'scale', 'invert', 'signed-mul', 'method-b'],
                                help='Operation')
    compute_parser.add_argument('operands', nargs='+', type=float, help='Operands')
    compute_parser.add_argument('--table', help='Calibration table to decode against')
    compute_parser.add_argument('--config', help='YAML run-config file (schedule section is ignored)')
    compute_parser.add_argument('--g-right', type=float, default=1.0, help='Right-side interaction g^R (default: 1)')
    compute_parser.add_argument('--out', help='Report file (default: SOLITON_OUTPUT_DIR/compute_<op>.json)')
    compute_parser.add_argument('--warn-fingerprint', action='store_true',
                                help='Only warn when the table was built with a different config')

    # SELFTEST command
    selftest_parser = subparsers.add_parser('selftest', help='Run the numerical self-test suites')
    selftest_parser.add_argument('--dt', type=float, help='Time step override')
    selftest_parser.add_argument('--quick', action='store_true', help='Smaller grid and shorter runs')

    return parser


COMMANDS = {
    'simulate': cmd_simulate,
    'calibrate': cmd_calibrate,
    'compute': cmd_compute,
    'selftest': cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code"""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    # If no command specified, show help
    if not args.command:
        parser.print_help()
        return EXIT_OK

    try:
        settings = load_settings()
        configure_logging(settings.log_level)
        return COMMANDS[args.command](args, settings)
    except SolitrainError as e:
        print(f"Error: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
