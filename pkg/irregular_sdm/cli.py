# -*- coding: utf-8 -*-

"""The irregular-sdm command.

    irregular-sdm gen      generate the mesh and partitioning files of a workload
    irregular-sdm run      run the full pipeline
    irregular-sdm verify   check the parallel code against the oracles
    irregular-sdm catalog  print the catalog tables
    irregular-sdm bench    time the variants of each phase

Options may also be given in ini files (~/.irregular-sdm/sdm.ini, ./sdm.ini or
the file named with --config) or in environment variables such as SDM_NPROCS.
"""

import json
import logging
from pathlib import Path
import sys
import tempfile

import configargparse

import irregular_sdm
from irregular_sdm import bench, catalog, oracles, workloads
from irregular_sdm.errors import SDMError, VerificationError
from irregular_sdm.sdm_parameters import SDMParameters
import seamm_util.printing as printing
from seamm_util.printing import FormattedText as __

logger = logging.getLogger(__name__)
job = printing.getPrinter()
printer = printing.getPrinter("SDM")

commands = ("gen", "run", "verify", "catalog", "bench")

default_config_files = ["~/.irregular-sdm/sdm.ini", "./sdm.ini"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFICATION = 3
EXIT_ERROR = 4


def create_parser():
    """The command-line / config file parser."""
    parser = configargparse.ArgParser(
        prog="irregular-sdm",
        description="Scientific data management for irregular applications.",
        default_config_files=default_config_files,
        ignore_unknown_config_file_keys=True,
        auto_env_var_prefix="SDM_",
    )
    parser.add_argument("command", choices=commands, help="what to do")
    parser.add_argument(
        "--config", is_config_file=True, help="an ini file with further options"
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"],
        type=str.upper,
        help="the level of diagnostic messages",
    )
    parser.add_argument(
        "--quiet", action="store_true", help="print only the essential results"
    )
    parser.add_argument(
        "--normalize",
        action="store_true",
        help="catalog: blank the timestamps so runs can be compared",
    )
    parser.add_argument(
        "--cases",
        type=int,
        default=20,
        help="verify: the number of random meshes to check",
    )
    parser.add_argument(
        "--work-dir",
        default=None,
        help="verify and bench: scratch directory, by default a temporary one",
    )
    SDMParameters().add_arguments(parser)
    return parser


def gen(options, parameters):
    P = parameters.values_to_dict()
    spec = workloads.WorkloadSpec(
        kind=P["workload"],
        total_nodes=P["total_nodes"] or None,
        timesteps=P["timesteps"] or None,
        level=int(P["level"]),
        nprocs=P["nprocs"],
        seed=P["seed"],
    )
    workload = workloads.gen_workload(spec, P["workload_dir"])
    mesh = workload.mesh
    printer.normal(
        __(
            f"Generated the {spec.kind.value} workload in {workload.directory}: "
            f"{mesh.total_nodes} nodes, {mesh.total_edges} edges, "
            f"{len(workload.imported_arrays)} imported arrays and "
            f"{len(workload.result_datasets)} result datasets over "
            f"{spec.timesteps} timesteps.",
            indent=4 * " ",
            wrap=True,
            dedent=False,
        )
    )
    return EXIT_OK


def run_pipeline(options, parameters):
    sdm = irregular_sdm.SDM(parameters)
    results = sdm.run()
    if results["history_hit"]:
        job.job("index distribution: history hit")
    else:
        job.job("index distribution: distributed")
    return EXIT_OK


def verify(options, parameters):
    seed = parameters.values_to_dict()["seed"]
    if options.work_dir is None:
        with tempfile.TemporaryDirectory() as work_dir:
            checked = oracles.verify(seed, work_dir, cases=options.cases)
    else:
        checked = oracles.verify(seed, options.work_dir, cases=options.cases)
    job.job(f"verified {checked} cases against the oracles")
    return EXIT_OK


def dump_catalog(options, parameters):
    P = parameters.values_to_dict()
    tables = catalog.read_tables(P["catalog_dir"], normalize=options.normalize)
    job.job(json.dumps(tables, indent=4, sort_keys=True))
    return EXIT_OK


def run_bench(options, parameters):
    if options.work_dir is None:
        with tempfile.TemporaryDirectory() as work_dir:
            rows = bench.bench(parameters, work_dir)
    else:
        rows = bench.bench(parameters, Path(options.work_dir))
    bench.print_table(rows)
    return EXIT_OK


actions = {
    "gen": gen,
    "run": run_pipeline,
    "verify": verify,
    "catalog": dump_catalog,
    "bench": run_bench,
}


def main(argv=None):
    """Run the command and return the exit code."""
    parser = create_parser()
    try:
        options = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    logging.basicConfig(level=options.log_level)

    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter(fmt="{message:s}", style="{"))
    job.addHandler(handler)
    job.setLevel(printing.JOB if options.quiet else printing.NORMAL)

    try:
        try:
            parameters = SDMParameters.from_options(options)
        except (KeyError, ValueError) as e:
            print(f"irregular-sdm: {e}", file=sys.stderr)
            return EXIT_USAGE
        return actions[options.command](options, parameters)
    except VerificationError as e:
        print(f"irregular-sdm: verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFICATION
    except (SDMError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"irregular-sdm: {e}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        job.removeHandler(handler)


def run():
    """The entry point of the console script."""
    sys.exit(main())
