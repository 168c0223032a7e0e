"""
Cell-free OTFS ISAC simulator - Main Entry Point
"""

import argparse
import json
import os
import sys

# Add src to path (for development mode)
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

def check_dependencies():
    """Check that all required dependencies are installed"""
    missing = []

    try:
        import numpy
    except ImportError:
        missing.append("numpy>=1.24.0")

    try:
        import scipy
    except ImportError:
        missing.append("scipy>=1.10.0")

    try:
        import pandas
    except ImportError:
        missing.append("pandas>=2.0.0")

    try:
        import cvxopt
    except ImportError:
        missing.append("cvxopt>=1.3.0")

    try:
        import cvxpy
    except ImportError:
        missing.append("cvxpy>=1.4.0")

    try:
        import sqlalchemy
    except ImportError:
        missing.append("SQLAlchemy>=2.0.0")

    try:
        import pydantic
    except ImportError:
        missing.append("pydantic>=2.0.0")

    try:
        import loguru
    except ImportError:
        missing.append("loguru>=0.7.0")

    try:
        import appdirs
    except ImportError:
        missing.append("appdirs>=1.4.4")

    try:
        import psutil
    except ImportError:
        missing.append("psutil>=5.9.0")

    if missing:
        print("=" * 70, file=sys.stderr)
        print("ERROR: Missing required dependencies", file=sys.stderr)
        print("=" * 70, file=sys.stderr)
        print("\nThe following packages are missing:\n", file=sys.stderr)
        for pkg in missing:
            print(f"  - {pkg}", file=sys.stderr)
        print("\nTo install all dependencies, run:", file=sys.stderr)
        print("\n  pip install -r requirements.txt", file=sys.stderr)
        print("\n" + "=" * 70, file=sys.stderr)
        return False

    return True

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='PATH', help="JSON configuration file")
    common.add_argument('--seed', type=int, help="scenario / base seed (unsigned 64-bit)")
    common.add_argument('--out', metavar='DIR', help="output directory")
    common.add_argument('--grid-step', type=float, metavar='METERS', help="finest search step")
    common.add_argument('--waveform', choices=['otfs', 'ofdm'])
    common.add_argument('--verbose', action='store_true', help="debug output on stderr")

    parser = argparse.ArgumentParser(
        prog='cellfree-isac',
        description="Cell-free MIMO OTFS/OFDM integrated sensing and communication simulator",
    )
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('simulate', parents=[common], help="synthesize an echo and estimate target positions")

    peb = commands.add_parser('peb', parents=[common], help="exact and approximate position error bounds")
    peb.add_argument('--sweep', choices=['targets', 'aoa'], default='targets')

    optimize = commands.add_parser('optimize', parents=[common], help="AP mode selection and power allocation")
    optimize.add_argument('--scheme', choices=['jap', 'cap', 'rap'], default='jap')

    validate = commands.add_parser('validate', parents=[common], help="run the oracle and property checks")
    validate.add_argument('--quick', action='store_true', help="reduced instance counts")
    validate.add_argument('--check', action='append', metavar='NAME', help="run only the named check(s)")

    commands.add_parser('export-map', parents=[common], help="radar map of the first target as CSV")

    experiment = commands.add_parser('experiment', parents=[common], help="run a Monte Carlo campaign")
    experiment.add_argument('kind', help="experiment kind, e.g. peb_vs_aoa")
    experiment.add_argument('--trials', type=int, help="trials per sweep point")
    experiment.add_argument('--workers', type=int, help="worker processes")
    experiment.add_argument('--no-db', action='store_true', help="do not record the campaign")
    return parser

def setup_logging(output_dir: str, verbose: bool):
    from loguru import logger
    from src.utils.constants import LOG_FILE

    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")
    os.makedirs(output_dir, exist_ok=True)
    logger.add(os.path.join(output_dir, LOG_FILE), rotation="30 MB", level="DEBUG")

def _apply_overrides(config, args, desk: bool):
    """Scene preset, waveform and search step from the command line"""
    from src.utils.config import ScenarioConfig
    from src.utils.constants import Waveform

    scenario = config.scenario
    if desk and not args.config:
        scenario = ScenarioConfig.desk()
    if args.waveform:
        grid = scenario.grid.model_copy(update={'waveform': Waveform(args.waveform)})
        scenario = scenario.model_copy(update={'grid': grid})
    estimator = config.estimator
    if args.grid_step:
        steps = [s for s in estimator.search_steps if s > args.grid_step] + [args.grid_step]
        estimator = estimator.model_copy(update={'search_steps': steps})
    return config.model_copy(update={'scenario': scenario, 'estimator': estimator})

def _write_json(payload, path: str):
    from src.core.experiments import json_safe

    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(json_safe(payload), f, indent=2)
        f.write('\n')
    print(json.dumps(json_safe(payload), indent=2))

# Commands

def cmd_simulate(args, config, output_dir: str) -> int:
    import numpy as np
    from loguru import logger

    from src.core.dd_channel import synthesize_echo
    from src.core.estimator import estimate_positions, rmse
    from src.core.experiments import equal_power_setup
    from src.core.fisher import position_fim
    from src.core.scenario import generate_scenario, spawn_rng
    from src.utils.constants import BoundMode

    scenario = generate_scenario(config.scenario, args.seed)
    allocation = equal_power_setup(scenario)
    echo = synthesize_echo(scenario, allocation, spawn_rng(args.seed, 1))
    result = estimate_positions(echo, scenario, config)
    truth = np.array([t.position for t in scenario.targets])
    reports = position_fim(scenario, allocation, BoundMode.EXACT)
    payload = {
        'seed': args.seed,
        'waveform': scenario.waveform.value,
        'transmitters': allocation.transmitters,
        'receivers': allocation.receivers,
        'truth': truth.tolist(),
        'estimate': result.positions.tolist(),
        'rmse': rmse(result.flat[None, :], truth.ravel()),
        'exact_peb': [float(r.peb) for r in reports],
        'objective': float(result.value),
    }
    logger.info(f"Position error {payload['rmse']:.4f} m")
    _write_json(payload, os.path.join(output_dir, "simulate.json"))
    return 0

def cmd_peb(args, config, output_dir: str) -> int:
    from src.core.experiments import aoa_scenario, equal_power_setup, sensing_only_allocation
    from src.core.fisher import approx_coefficients, peb_sweep_frame, position_fim, signal_factors
    from src.core.scenario import generate_scenario
    from src.utils.constants import BoundMode

    if args.sweep == 'aoa':
        angles = [float(a) for a in range(0, 181, 15)]
        exact, approx = [], []
        for angle in angles:
            scenario = aoa_scenario(config.scenario, angle, seed=args.seed)
            allocation = sensing_only_allocation(scenario, [0], [1])
            exact.append(position_fim(scenario, allocation, BoundMode.EXACT)[0].peb)
            approx.append(position_fim(scenario, allocation, BoundMode.APPROX)[0].peb)
        frame = peb_sweep_frame(angles, exact, approx, 'aoa_deg')
        grid = scenario.grid
    else:
        scenario = generate_scenario(config.scenario, args.seed)
        allocation = equal_power_setup(scenario)
        exact = [r.peb for r in position_fim(scenario, allocation, BoundMode.EXACT)]
        approx = [r.peb for r in position_fim(scenario, allocation, BoundMode.APPROX)]
        frame = peb_sweep_frame(range(scenario.num_targets), exact, approx, 'target')
        grid = scenario.grid

    path = os.path.join(output_dir, f"peb_{args.sweep}.csv")
    frame.to_csv(path, index=False, float_format='%.12g', lineterminator='\n')
    waveform = config.scenario.grid.waveform
    payload = {
        'waveform': waveform.value,
        'M': grid.M,
        'N': grid.N,
        'd_coefficients': approx_coefficients(signal_factors(grid, waveform), config.scenario.antennas),
        'exact_peb': [float(v) for v in exact],
        'approx_peb': [float(v) for v in approx],
        'csv': path,
    }
    _write_json(payload, os.path.join(output_dir, f"peb_{args.sweep}.json"))
    return 0

def cmd_optimize(args, config, output_dir: str) -> int:
    from src.core.comms import comm_coefficients, min_spectral_efficiency
    from src.core.optimizer import feasibility_audit, run_scheme
    from src.core.scenario import generate_scenario, spawn_rng
    from src.utils.constants import Scheme

    scenario = generate_scenario(config.scenario, args.seed)
    coeffs = comm_coefficients(scenario)
    allocation = run_scheme(scenario, config, Scheme(args.scheme), rng=spawn_rng(args.seed, 2))
    audit = feasibility_audit(scenario, allocation, config, coeffs)
    payload = allocation.to_dict()
    payload.update({
        'scheme': args.scheme,
        'min_se': min_spectral_efficiency(coeffs, allocation, scenario.grid, scenario.waveform),
        'peb': [float(v) for v in audit['peb']],
        'ap_power': [float(v) for v in audit['power']],
        'feasible': bool(audit['feasible']),
    })
    _write_json(payload, os.path.join(output_dir, f"optimize_{args.scheme}.json"))
    return 0 if audit['feasible'] else 1

def cmd_validate(args, config, output_dir: str) -> int:
    from loguru import logger

    from src.core.validation import all_passed, run_validation, summary_counts, write_validation

    results = run_validation(config, quick=args.quick, seed=args.seed, only=args.check)
    path = write_validation(results, output_dir)
    counts = summary_counts(results)
    logger.info(f"{counts['passed']}/{counts['checks']} checks passed, table at {path}")
    return 0 if all_passed(results) else 1

# Default radar map resolution in meters
MAP_STEP = 1.0

def cmd_export_map(args, config, output_dir: str) -> int:
    from loguru import logger

    from src.core.dd_channel import synthesize_echo
    from src.core.estimator import SearchGrid, radar_map
    from src.core.experiments import equal_power_setup
    from src.core.scenario import generate_scenario, spawn_rng

    scenario = generate_scenario(config.scenario, args.seed)
    if scenario.num_targets == 0:
        from src.core.exceptions import ConfigurationError
        raise ConfigurationError("export-map needs at least one target")
    allocation = equal_power_setup(scenario)
    echo = synthesize_echo(scenario, allocation, spawn_rng(args.seed, 1))
    target = scenario.targets[0]
    step = args.grid_step or MAP_STEP
    grid = SearchGrid.around(target.hotspot_center, target.hotspot_half_width, (step,))
    fixed = {v: t.position for v, t in enumerate(scenario.targets)}
    result = radar_map(echo, scenario, grid, 0, config.estimator.objective, fixed)
    path = os.path.join(output_dir, "radar_map.csv")
    result.to_csv(path)
    logger.info(f"Radar map ({len(result.values)} cells, peak at {result.best_position.round(3).tolist()}) written to {path}")
    return 0

# Kinds that synthesize echoes or run the joint solver use the desk scene by default
DESK_KINDS = (
    'rmse_vs_rcs', 'convergence', 'se_vs_peb_budget', 'mobility_sweep', 'cellular_baseline', 'se_vs_rcs',
)

def cmd_experiment(args, config, output_dir: str) -> int:
    from src.core.experiments import ExperimentSpec, run_experiment
    from src.utils.constants import ExperimentKind

    spec = ExperimentSpec(
        kind=ExperimentKind(args.kind),
        trials=args.trials or config.harness.trials,
        base_seed=args.seed,
        config=config,
        output_dir=output_dir,
        workers=args.workers,
    )
    run_experiment(spec, output_dir, record=False if args.no_db else None)
    return 0

HANDLERS = {
    'simulate': (cmd_simulate, True),
    'peb': (cmd_peb, False),
    'optimize': (cmd_optimize, False),
    'validate': (cmd_validate, False),
    'export-map': (cmd_export_map, True),
    'experiment': (cmd_experiment, None),
}

def main(argv=None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)

    # Check dependencies first
    if not check_dependencies():
        return 1

    from loguru import logger
    from src.core.exceptions import SimulationError
    from src.utils.config import load_config_file
    from src.utils.constants import ExperimentKind

    try:
        config = load_config_file(args.config)
        handler, desk = HANDLERS[args.command]
        if args.command == 'experiment':
            valid = [k.value for k in ExperimentKind]
            if args.kind not in valid:
                build_parser().error(f"unknown experiment kind '{args.kind}' (choose from {', '.join(valid)})")
            desk = args.kind in DESK_KINDS
        config = _apply_overrides(config, args, desk)
        if args.seed is None:
            args.seed = config.harness.base_seed
        output_dir = config.resolve_output_dir(args.out)
        setup_logging(output_dir, args.verbose)
        logger.info(f"Command '{args.command}' (seed {args.seed}), output in {output_dir}")
        return handler(args, config, output_dir)
    except SimulationError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return 1

if __name__ == "__main__":
    sys.exit(main())
