# -*- coding: utf-8 -*-
"""
Control parameters for running the Scientific Data Manager pipeline
"""

import logging

import seamm

from irregular_sdm import metadata

logger = logging.getLogger(__name__)


class SDMParameters(seamm.Parameters):
    """
    The control parameters for the SDM pipeline.

    Attributes
    ----------
    parameters : {"kind", "default", "default_units", "enumeration",
                  "format_string", description", help_text"}
        A dictionary containing the parameters of the pipeline.
        Each key of the dictionary is a dictionary that contains the
        the following keys: kind, default, default_units, enumeration,
        format_string, description and help text.

    parameters["kind"]: "integer", "string", "boolean" or "enum"
        The kind of the value, which sets how it is parsed from the command line
        and configuration files.

    parameters["default"] :
        The default value of the parameter, used to reset it.

    parameters["default_units"] : str
        The default units, used for resetting the value.

    parameters["enumeration"]: tuple
        A tuple of enumerated values.

    parameters["format_string"]: str
        A format string for "pretty" output.

    parameters["description"]: str
        A short string used as a prompt.

    parameters["help_text"]: tuple
        A longer string to display as help for the user.

    See Also
    --------
    SDM
    """

    minimums = {"nprocs": 1}

    parameters = {
        "workload": {
            "default": "worked-example",
            "kind": "enum",
            "default_units": None,
            "enumeration": metadata.workloads,
            "format_string": "",
            "description": "Workload:",
            "help_text": (
                "The I/O pattern to run: the five-node worked example, a "
                "vertex-centered CFD code (fun3d) or a Rayleigh-Taylor code (rt)."
            ),
        },
        "nprocs": {
            "default": 2,
            "kind": "integer",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "d",
            "description": "Number of processes:",
            "help_text": "The number of ranks the job runs on.",
        },
        "level": {
            "default": "3",
            "kind": "enum",
            "default_units": None,
            "enumeration": metadata.org_levels,
            "format_string": "",
            "description": "File organization level:",
            "help_text": (
                "1: a file per dataset and timestep; 2: a file per dataset; "
                "3: a file per group."
            ),
        },
        "total_nodes": {
            "default": 0,
            "kind": "integer",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "d",
            "description": "Number of nodes:",
            "help_text": (
                "The number of mesh nodes of a generated workload; 0 uses the "
                "default size of the workload."
            ),
        },
        "timesteps": {
            "default": 0,
            "kind": "integer",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "d",
            "description": "Number of timesteps:",
            "help_text": (
                "How many timesteps of results to write; 0 uses the default of "
                "the workload."
            ),
        },
        "seed": {
            "default": 0,
            "kind": "integer",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "d",
            "description": "Random seed:",
            "help_text": "The seed for mesh numbering and random test meshes.",
        },
        "use_history": {
            "default": False,
            "kind": "boolean",
            "default_units": None,
            "enumeration": (True, False),
            "format_string": "",
            "description": "Use history files:",
            "help_text": (
                "Replay the index distribution from a history file when one "
                "exists for this mesh size and number of processes."
            ),
        },
        "register_history": {
            "default": True,
            "kind": "boolean",
            "default_units": None,
            "enumeration": (True, False),
            "format_string": "",
            "description": "Save history files:",
            "help_text": (
                "Save a new index distribution to a history file for later runs."
            ),
        },
        "strategy": {
            "default": "single-pass",
            "kind": "enum",
            "default_units": None,
            "enumeration": metadata.distribution_strategies,
            "format_string": "",
            "description": "Distribution strategy:",
            "help_text": (
                "single-pass appends the held edges while the blocks go around "
                "the ring; two-pass counts them first."
            ),
        },
        "write_method": {
            "default": "two-phase",
            "kind": "enum",
            "default_units": None,
            "enumeration": metadata.write_methods,
            "format_string": "",
            "description": "Write method:",
            "help_text": (
                "two-phase aggregates values before writing contiguous ranges; "
                "sequential has the ranks write their own values one by one."
            ),
        },
        "import_method": {
            "default": "parallel",
            "kind": "enum",
            "default_units": None,
            "enumeration": ("parallel", "broadcast"),
            "format_string": "",
            "description": "Edge import:",
            "help_text": (
                "parallel has every rank read its block of the edges; broadcast "
                "has rank 0 read them all and send them out."
            ),
        },
        "sequential": {
            "default": False,
            "kind": "boolean",
            "default_units": None,
            "enumeration": (True, False),
            "format_string": "",
            "description": "Run ranks one at a time:",
            "help_text": "Interleave the ranks on one thread at a time, for debugging.",
        },
        "app_name": {
            "default": "irregular-sdm",
            "kind": "string",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "",
            "description": "Application name:",
            "help_text": "The application name recorded in the catalog.",
        },
        "workload_dir": {
            "default": "sdm/input",
            "kind": "string",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "",
            "description": "Workload directory:",
            "help_text": "Where the mesh and partitioning files are.",
        },
        "data_dir": {
            "default": "sdm/data",
            "kind": "string",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "",
            "description": "Data directory:",
            "help_text": "Where result files are written.",
        },
        "catalog_dir": {
            "default": "sdm/catalog",
            "kind": "string",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "",
            "description": "Catalog directory:",
            "help_text": "Where the catalog tables are kept.",
        },
        "history_dir": {
            "default": "sdm/history",
            "kind": "string",
            "default_units": None,
            "enumeration": tuple(),
            "format_string": "",
            "description": "History directory:",
            "help_text": "Where history files are written.",
        },
    }

    def __init__(self, defaults={}, data=None, values=None):
        """
        Initialize the parameters, by default with the parameters defined above

        Parameters
        ----------
        defaults: dict
            A dictionary of parameters to initialize. The parameters
            above are used first and any given will override/add to them.
        data: dict
            A dictionary of keys and a subdictionary with value and units
            for updating the current, default values.
        values: dict
            Plain values by parameter name, checked with :meth:`set_values`.

        Returns
        -------
        None
        """
        logger.debug("SDMParameters.__init__")

        super().__init__(defaults={**SDMParameters.parameters, **defaults}, data=data)
        if values is not None:
            self.set_values(values)

    def set_values(self, values):
        """Set plain values, checking enumerations and counts."""
        for key, value in values.items():
            if key not in self:
                raise KeyError(f"Unknown parameter '{key}'")
            definition = SDMParameters.parameters.get(key, {})
            kind = definition.get("kind")
            if kind == "enum" and value not in definition["enumeration"]:
                raise ValueError(
                    f"'{value}' is not valid for {key}: "
                    f"{', '.join(definition['enumeration'])}"
                )
            if kind == "integer":
                value = int(value)
                minimum = SDMParameters.minimums.get(key, 0)
                if value < minimum:
                    raise ValueError(f"{key} must be at least {minimum}, not {value}")
            self[key].value = value

    def add_arguments(self, parser):
        """Add an option to a command-line parser for each parameter."""
        for key, definition in SDMParameters.parameters.items():
            option = "--" + key.replace("_", "-")
            kind = definition["kind"]
            help_text = definition["help_text"]
            if kind == "boolean":
                group = parser.add_mutually_exclusive_group()
                group.add_argument(
                    option,
                    dest=key,
                    action="store_true",
                    default=definition["default"],
                    help=help_text,
                )
                group.add_argument(
                    "--no-" + key.replace("_", "-"),
                    dest=key,
                    action="store_false",
                    help=f"The opposite of {option}.",
                )
            elif kind == "enum":
                parser.add_argument(
                    option,
                    dest=key,
                    choices=definition["enumeration"],
                    default=definition["default"],
                    help=help_text,
                )
            elif kind == "integer":
                parser.add_argument(
                    option,
                    dest=key,
                    type=int,
                    default=definition["default"],
                    help=help_text,
                )
            else:
                parser.add_argument(
                    option, dest=key, default=definition["default"], help=help_text
                )

    @classmethod
    def from_options(cls, options):
        """Parameters holding the values of parsed command-line options."""
        return cls(
            values={
                key: getattr(options, key)
                for key in cls.parameters
                if hasattr(options, key)
            }
        )
