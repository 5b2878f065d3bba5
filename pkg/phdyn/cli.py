"""
Command line entry point.

    phdyn run <config.toml> [--seed S] [--workers W] [--output DIR] [--set table.key=value ...]
    phdyn recipe <AC1..AC10> [same flags]
    phdyn list

Config files are TOML with a [system] table (or a [[family]] array of system tables), a [task]
table and an optional [run] table; the accepted keys and their defaults are in `phdyn.config`.
Unknown keys are rejected. Outputs go to --output, else to $PHDYN_OUTPUT_ROOT/<task>_<hash>
(default root ./runs): summary.json plus the task's CSV, PPM and histogram files.

Exit status: 0 on success, 2 on a config error, 3 on a construction or numerical error (both with
a JSON error object on stderr and no files written), 4 when the summary carries flags.
"""

from typing import Optional, Sequence
import argparse
import json
import logging
import os
import sys

from phdyn.config import apply_overrides, config_hash, hashed_view, load, output_root, resolve
from phdyn.errors import ConfigError, PhdynError, error_payload
from phdyn.experiments import run_task
from phdyn.io import Artifact, jsonable, write_artifacts
from phdyn.recipes import list_recipes, recipe

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_FLAGGED = 4


def execute(raw: dict, seed: Optional[int] = None, workers: Optional[int] = None, output: Optional[str] = None,
            assignments: Optional[list[str]] = None) -> tuple[dict, str]:
    """
    Resolves a raw config, runs its task and writes every output.

    Returns:
        summary: The summary written to summary.json.
        directory: The output directory.
    """
    c = resolve(apply_overrides(raw, seed, workers, output, assignments))
    sha = config_hash(c)
    logger.info(f"Running task {c['task']['name']} with config_sha256 = {sha}")
    summary, artifacts = run_task(c)
    summary['config'] = hashed_view(c)
    directory = c['run']['output'] or os.path.join(output_root(), f"{c['task']['name']}_{sha[:12]}")
    write_artifacts(directory, [Artifact('summary.json', 'json', summary)] + artifacts, sha)
    for flag in summary['flags']:
        logger.warning(f"Flag: {flag}")
    return summary, directory


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, help='seed of every random draw')
    parser.add_argument('--workers', type=int, help='number of Ray workers; 1 runs inline')
    parser.add_argument('--output', type=str, help='output directory')
    parser.add_argument('--set', dest='assignments', action='append', default=[], metavar='TABLE.KEY=VALUE',
                        help='override one config value (TOML syntax), may be repeated')
    parser.add_argument('--progress', action='store_true', help='show progress bars')


def main(argv: Optional[Sequence[str]] = None) -> int:
    argparser = argparse.ArgumentParser(prog='phdyn', description='Numerical experiments on partially hyperbolic maps.')
    argparser.add_argument('-v', '--verbose', action='store_true', help='log at DEBUG level')
    commands = argparser.add_subparsers(dest='command', required=True)
    run_parser = commands.add_parser('run', help='run a TOML config')
    run_parser.add_argument('config', type=str, help='path to the config file')
    _add_run_flags(run_parser)
    recipe_parser = commands.add_parser('recipe', help='run a named preset')
    recipe_parser.add_argument('name', type=str, help='preset name, see `phdyn list`')
    _add_run_flags(recipe_parser)
    commands.add_parser('list', help='list the presets')
    args = argparser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    if args.command == 'list':
        for name, description in list_recipes():
            print(f"{name:5s} {description}")
        return 0

    try:
        raw = load(args.config) if args.command == 'run' else recipe(args.name)
        assignments = args.assignments + (['run.show_progress=true'] if args.progress else [])
        summary, directory = execute(raw, args.seed, args.workers, args.output, assignments)
    except ConfigError as error:
        print(json.dumps(jsonable(error_payload(error))), file=sys.stderr)
        return EXIT_CONFIG
    except (PhdynError, ValueError) as error:
        print(json.dumps(jsonable(error_payload(error))), file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"Wrote {directory}")
    return EXIT_FLAGGED if summary['flags'] else 0


if __name__ == '__main__':
    sys.exit(main())
