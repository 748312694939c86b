"""
Command-line entry point for the variable-speed pump scheduler.
"""
import argparse
import logging
import os
import sys

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from app import create_app  # noqa: E402
from app.exceptions import SchedulerError  # noqa: E402
from app.models.network import load_network  # noqa: E402
from app.models.schedule import GroupSchedule, load_schedule  # noqa: E402
from app.services import problem_io  # noqa: E402
from app.services.pipeline import (  # noqa: E402
    PumpSchedulingPlanner, load_batch_spec, perturb_demands,
)
from app.services.validator import validate_solution  # noqa: E402
from app.utils.helpers import (  # noqa: E402
    format_currency, format_percent, write_csv, write_json,
)

logger = logging.getLogger('app.cli')

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARTIAL_BATCH = 4


def build_parser():
    parser = argparse.ArgumentParser(
        description='Optimal scheduling of variable-speed pumps in water networks')
    parser.add_argument('--env', choices=['development', 'testing', 'production'],
                        help='Configuration to use (default: PUMPSCHED_ENV)')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out-dir', help='Directory for output files')
    common.add_argument('--seed', type=int,
                        help='Perturb the fixture demands with this random seed')

    solver = argparse.ArgumentParser(add_help=False, parents=[common])
    solver.add_argument('--gap', type=float, help='Relative MIP gap target (default 0.05)')
    solver.add_argument('--time-limit', type=float, help='Solver time limit in seconds')
    solver.add_argument('--solver', choices=['embedded', 'highs'], help='Solver backend')
    solver.add_argument('--level-offset', type=float, default=0.0,
                        help='Target final-minus-initial tank level in metres')

    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', parents=[common],
                       help='Extended-period simulation of a schedule')
    p.add_argument('network', help='Network JSON file')
    p.add_argument('--schedule', help='Schedule JSON file (default: all pumps on at s=1)')

    p = sub.add_parser('optimize', parents=[solver], help='Run the full scheduling pipeline')
    p.add_argument('network', help='Network JSON file')
    p.add_argument('--export-mps', help='Also write the MILP to this MPS file')
    p.add_argument('--export-only', action='store_true',
                   help='Write the MPS file and stop before solving')

    p = sub.add_parser('batch', parents=[solver], help='Optimize over a parameter grid')
    p.add_argument('network', help='Network JSON file')
    p.add_argument('spec', help='Batch grid JSON file')
    p.add_argument('--jobs', type=int, help='Parallel worker processes')

    p = sub.add_parser('validate', parents=[common],
                       help='Check a solution against a problem file')
    p.add_argument('problem', help='Problem file (.json or .mps)')
    p.add_argument('solution', help='Solution JSON file')
    p.add_argument('--tol', type=float, help='Residual tolerance (default 1e-6)')

    p = sub.add_parser('export-mps', parents=[common],
                       help='Write the MILP of a network as MPS and JSON')
    p.add_argument('network', help='Network JSON file')
    p.add_argument('output', help='Output MPS path')
    p.add_argument('--level-offset', type=float, default=0.0,
                   help='Target final-minus-initial tank level in metres')
    return parser


def config_overrides(args):
    """Config keys set by command-line flags."""
    overrides = {}
    if getattr(args, 'gap', None) is not None:
        overrides['MIP_GAP'] = args.gap
    if getattr(args, 'time_limit', None) is not None:
        overrides['TIME_LIMIT'] = args.time_limit
    if getattr(args, 'solver', None):
        overrides['SOLVER_BACKEND'] = args.solver
    if getattr(args, 'jobs', None):
        overrides['BATCH_JOBS'] = args.jobs
    if getattr(args, 'tol', None) is not None:
        overrides['FEASIBILITY_TOL'] = args.tol
    if args.out_dir:
        overrides['OUT_DIR'] = args.out_dir
    return overrides


def _load(args):
    network = load_network(args.network)
    if args.seed is not None:
        network = perturb_demands(network, args.seed)
        logger.info(f"Demands perturbed with seed {args.seed}")
    return network


def cmd_simulate(app, args):
    network = _load(args)
    if args.schedule:
        schedule = load_schedule(args.schedule, network)
    else:
        schedule = GroupSchedule.flat(network)

    planner = PumpSchedulingPlanner(app.config)
    result = planner.simulate(network, schedule)
    out_dir = app.config['OUT_DIR']
    write_csv(os.path.join(out_dir, 'simulation.csv'), result.to_frame())
    write_json(os.path.join(out_dir, 'simulation.json'), result.to_dict())
    print(f"Simulated cost: {format_currency(result.cost)}")
    if result.level_violations:
        print(f"Tank level violations: {len(result.level_violations)}")
    return EXIT_OK


def cmd_optimize(app, args):
    network = _load(args)
    planner = PumpSchedulingPlanner(app.config)
    out_dir = app.config['OUT_DIR']

    if args.export_only:
        target = args.export_mps or os.path.join(out_dir, 'problem.mps')
        mps_path, json_path = planner.export(network, target, args.level_offset)
        print(f"Wrote {mps_path} and {json_path}")
        return EXIT_OK

    report = planner.optimize(network, final_level_offset=args.level_offset,
                              export_mps=args.export_mps)
    planner.write_report(report, out_dir)

    print(f"Baseline cost:     {format_currency(report.baseline_cost)}")
    print(f"MILP objective:    {format_currency(report.optimized_cost)}")
    print(f"Re-simulated cost: {format_currency(report.resimulated_cost)}")
    print(f"Saving:            {format_percent(report.percent_saving)}")
    print(f"Solver:            {report.result.status.value}, gap {report.result.gap:.4f}, "
          f"{report.result.nodes} nodes, {report.result.wall_time:.1f}s")
    print(f"Validation:        {report.validation.verdict}")
    return EXIT_OK if report.validation.passed else EXIT_VALIDATION


def cmd_batch(app, args):
    network = _load(args)
    spec = load_batch_spec(args.spec)
    planner = PumpSchedulingPlanner(app.config)
    summary = planner.batch(network, spec, app.config['OUT_DIR'],
                            jobs=int(app.config.get('BATCH_JOBS', 1)))
    print(f"Scenarios solved: {summary.succeeded}/{summary.total} "
          f"({format_percent(100.0 * summary.success_rate)})")
    return EXIT_PARTIAL_BATCH if summary.partial_failure else EXIT_OK


def cmd_validate(app, args):
    problem = problem_io.load_problem(args.problem)
    x = problem_io.load_solution(args.solution, problem)
    report = validate_solution(problem, x, tol=float(app.config.get('FEASIBILITY_TOL', 1e-6)))
    write_json(os.path.join(app.config['OUT_DIR'], 'validation.json'), report.to_dict())
    print(report.to_frame().to_string(index=False))
    print(f"Verdict: {report.verdict}")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_export_mps(app, args):
    network = _load(args)
    planner = PumpSchedulingPlanner(app.config)
    mps_path, json_path = planner.export(network, args.output, args.level_offset)
    print(f"Wrote {mps_path} and {json_path}")
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'optimize': cmd_optimize,
    'batch': cmd_batch,
    'validate': cmd_validate,
    'export-mps': cmd_export_mps,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    app = create_app(config_overrides(args), config_name=args.env)

    try:
        return COMMANDS[args.command](app, args)
    except SchedulerError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"Error: {str(e)}", file=sys.stderr)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
