# main.py
"""Command-line front end for the decentralized multitask learning experiments."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from config import EXACT_GRAPH_LIMIT, LOG_FILE, OUTPUT_ROOT
from experiments.configuration import (
    DEFAULT_CONFIG,
    ExperimentConfig,
    load_experiment_config,
)
from experiments.contracts import ContractValidationError
from experiments.harness import run_dp_sweep, run_figure1, run_figure2, run_simulation
from experiments.manifest import verify_manifest, write_manifest
from mtcool.domain import ConfigurationError, EdgeListError
from mtcool.graph_core import (
    GraphTopology,
    clique_union,
    complete_graph,
    cycle_graph,
    empty_graph,
    erdos_renyi,
    graph_stats,
    parse_edge_list,
    path_graph,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

COMMANDS = {
    'simulate': run_simulation,
    'sweep':    run_figure2,
    'figure1':  run_figure1,
    'dp-sweep': run_dp_sweep,
}


def configure_logging(verbose: bool = False, log_file: Optional[Path] = None) -> None:
    log_file = Path(log_file or LOG_FILE)
    log_file.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(log_file),
        ]
    )
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def build_graph(args) -> GraphTopology:
    """Graph named by the graph-stats generator flags."""
    if args.edge_list:
        return parse_edge_list(Path(args.edge_list).read_text(encoding='utf-8'))
    if args.complete is not None:
        return complete_graph(args.complete)
    if args.path is not None:
        return path_graph(args.path)
    if args.cycle is not None:
        return cycle_graph(args.cycle)
    if args.empty is not None:
        return empty_graph(args.empty)
    if args.clique_union:
        return clique_union(args.clique_union)
    n, p = args.er
    if float(n) != int(float(n)):
        raise ConfigurationError(f"--er expects an integer vertex count, got {n}")
    return erdos_renyi(int(float(n)), float(p), args.seed)


def cmd_graph_stats(args) -> int:
    graph = build_graph(args)
    exact = True if args.exact else None
    stats = graph_stats(graph, exact_limit=args.exact_limit, exact=exact)
    mode = 'approximate' if stats.approximate else 'exact'
    regular = stats.is_regular
    print(f"n={graph.n} n_min={graph.n_min} n_max={graph.n_max}")
    print(f"alpha={stats.alpha} gamma={stats.gamma} alpha2={stats.alpha2} ({mode})")
    print(f"regular={'yes, degree ' + str(regular) if regular is not None else 'no'}")
    return EXIT_OK


def resolve_config(args) -> ExperimentConfig:
    experiment = load_experiment_config(Path(args.config))
    overrides = {}
    if getattr(args, 'paper_scale', False):
        experiment = experiment.paper_scale()
    if getattr(args, 'workers', None) is not None:
        overrides['workers'] = args.workers
    if getattr(args, 'seed', None) is not None:
        overrides['master_seed'] = args.seed
    if overrides:
        experiment = ExperimentConfig.from_payload({**experiment.to_payload(), **overrides})
    return experiment


def cmd_experiment(args) -> int:
    experiment = resolve_config(args)
    output = Path(args.output) if args.output else OUTPUT_ROOT / experiment.output_dir
    logger.info(f"Running {args.command} into {output}")
    result = COMMANDS[args.command](experiment, output)
    manifest = write_manifest(args.command, experiment, result.streams, result.outputs, output)
    print(f"\n✅ Completed {args.command}: {len(result.outputs)} files, manifest {manifest}")
    return EXIT_OK


def cmd_verify_manifest(args) -> int:
    problems = verify_manifest(Path(args.manifest))
    if problems:
        for problem in problems:
            print(f"❌ {problem}")
        return EXIT_RUNTIME
    print("✅ Every listed output is present and hash-matching")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Decentralized multitask online learning experiments',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py graph-stats --path 4
  python main.py graph-stats --er 30 0.9 --seed 1
  python main.py simulate experiments/config/desk.v1.json
  python main.py sweep --paper-scale --workers 8
  python main.py dp-sweep experiments/config/dp-desk.v1.json
  python main.py verify-manifest runs/desk/manifest.json
        """
    )
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable debug logging')
    commands = parser.add_subparsers(dest='command', required=True)

    stats = commands.add_parser('graph-stats', help='Print graph invariants')
    source = stats.add_mutually_exclusive_group(required=True)
    source.add_argument('--edge-list', help='Edge-list file with an n=<count> header')
    source.add_argument('--complete', type=int, metavar='N')
    source.add_argument('--path', type=int, metavar='N')
    source.add_argument('--cycle', type=int, metavar='N')
    source.add_argument('--empty', type=int, metavar='N')
    source.add_argument('--clique-union', type=int, nargs='+', metavar='SIZE')
    source.add_argument('--er', nargs=2, metavar=('N', 'P'), help='Erdos-Renyi G(N, P)')
    stats.add_argument('--seed', type=int, default=None, help='Seed for --er')
    stats.add_argument('--exact-limit', type=int, default=EXACT_GRAPH_LIMIT,
                       help=f'Largest n for exact enumeration (default: {EXACT_GRAPH_LIMIT})')
    stats.add_argument('--exact', action='store_true',
                       help='Require exact values; fails above the exact limit')

    for name, help_text in (
        ('simulate', 'Run config.algorithm once and write its trajectory'),
        ('sweep', 'Final regret across the lambda grid'),
        ('figure1', 'Regret over time at the target task deviation'),
        ('dp-sweep', 'Private regret across the epsilon grid'),
    ):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument('config', nargs='?', default=str(DEFAULT_CONFIG),
                         help='Experiment config JSON (default: desk.v1.json)')
        sub.add_argument('--output', help='Output directory (default: <output root>/<output_dir>)')
        sub.add_argument('--seed', type=int, default=None, help='Override master_seed')
        sub.add_argument('--workers', type=int, default=None, help='Worker processes')
        if name in ('sweep', 'figure1'):
            sub.add_argument('--paper-scale', action='store_true',
                             help='Use the full horizon and seed count')

    verify = commands.add_parser('verify-manifest', help='Check a manifest against its outputs')
    verify.add_argument('manifest')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    configure_logging(args.verbose)

    try:
        if args.command == 'graph-stats':
            return cmd_graph_stats(args)
        if args.command == 'verify-manifest':
            return cmd_verify_manifest(args)
        return cmd_experiment(args)
    except (ContractValidationError, ConfigurationError, EdgeListError) as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"❌ Error: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"❌ Error: {e}")
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
