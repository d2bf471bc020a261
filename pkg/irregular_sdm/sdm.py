# -*- coding: utf-8 -*-

"""The complete data manager pipeline of an irregular application.

Each rank opens the handle, imports the edges, distributes the index (or
replays it from a history file), imports the edge and node arrays through data
views, writes the results of every timestep and reads them back.
"""

import logging
from pathlib import Path
import time

import numpy as np

import irregular_sdm
from irregular_sdm.catalog import Catalog
from irregular_sdm.dataio import SDMHandle
from irregular_sdm.errors import RankFailure, SDMError, VerificationError
from irregular_sdm.harness import run_ranks
from irregular_sdm.history import index_registry, partition_index_with_history
from irregular_sdm.metadata import DataType, Kind, OrgLevel
from irregular_sdm.partition import EdgeList, MapArray, block_range, distribute_edges
from irregular_sdm import workloads
import seamm_util.printing as printing
from seamm_util.printing import FormattedText as __

# In addition to the normal logger, two logger-like printing facilities are
# defined: "job" and "printer". "job" is the main output of the command and
# should be used sparingly, typically to echo what will be done. "printer" is
# used for all normal output of the pipeline.

logger = logging.getLogger(__name__)
job = printing.getPrinter()
printer = printing.getPrinter("SDM")


def block_owner(total_items, nprocs):
    """The rank importing each item when items are split into blocks."""
    ranges = [block_range(total_items, r, nprocs) for r in range(nprocs)]
    sizes = [hi - lo for lo, hi in ranges]
    return np.repeat(np.arange(nprocs), sizes)


class _Timer(object):
    """Wall-clock time of the phases of a rank, bracketed by barriers."""

    def __init__(self, comm):
        self.comm = comm
        self.seconds = {}

    def __call__(self, phase):
        return _Phase(self, phase)


class _Phase(object):
    def __init__(self, timer, phase):
        self.timer = timer
        self.phase = phase

    def __enter__(self):
        self.timer.comm.barrier()
        self.start = time.perf_counter()

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.timer.comm.barrier()
            elapsed = time.perf_counter() - self.start
            self.timer.seconds[self.phase] = (
                self.timer.seconds.get(self.phase, 0.0) + elapsed
            )
        return False


class SDM(object):
    """
    The pipeline of an irregular application using the data manager.

    Attributes
    ----------
    parameters : SDMParameters
        The control parameters.
    workload : GeneratedWorkload
        The mesh and files being run, set by :meth:`run`.
    results : dict
        The summary of the last run.

    See Also
    --------
    SDMParameters
    """

    def __init__(self, parameters=None, title="SDM", logger=logger):
        logger.debug(f"Creating SDM {self}")
        self.title = title
        self.logger = logger
        self.parameters = (
            irregular_sdm.SDMParameters() if parameters is None else parameters
        )
        self.workload = None
        self.results = None

    @property
    def version(self):
        """The semantic version of this module."""
        return irregular_sdm.__version__

    @property
    def header(self):
        return f"{self.title} (irregular_sdm {self.version})"

    def description_text(self, P=None):
        """Create the text description of what the pipeline will do.

        Parameters
        ----------
        P: dict
            An optional dictionary of the current values of the control
            parameters.

        Returns
        -------
        str
            A description of the pipeline.
        """
        if not P:
            P = self.parameters.values_to_dict()

        text = (
            "Run the {workload} workload on {nprocs} processes, writing results "
            "at file-organization level {level} with the {write_method} method."
        )
        if P["use_history"]:
            text += (
                " The index distribution is replayed from a history file if one "
                "exists, otherwise the edges are distributed {strategy}."
            )
        else:
            text += " The edges are distributed {strategy}."
        if P["register_history"]:
            text += " A new distribution is saved to a history file."

        return self.header + "\n" + __(text, **P, indent=4 * " ").__str__()

    def load_workload(self, P):
        """Generate the workload files unless they are already there."""
        directory = Path(P["workload_dir"])
        spec = workloads.WorkloadSpec(
            kind=P["workload"],
            total_nodes=P["total_nodes"] or None,
            timesteps=P["timesteps"] or None,
            level=int(P["level"]),
            nprocs=P["nprocs"],
            seed=P["seed"],
        )
        manifest = directory / workloads.manifest_name
        if manifest.exists():
            workload = workloads.load_workload(
                directory, nprocs=spec.nprocs, level=spec.level
            )
            if workload.spec.kind == spec.kind:
                workload.spec.timesteps = spec.timesteps
                return workload
            logger.info(f"Replacing the {workload.spec.kind.value} workload")
        return workloads.gen_workload(spec, directory)

    def run(self):
        """Run the pipeline on all ranks.

        Returns
        -------
        dict
            The summary of the run, also kept in self.results.
        """
        P = self.parameters.values_to_dict()
        printer.important(__(self.description_text(P), indent=""))

        self.workload = self.load_workload(P)
        program = Pipeline(self.workload, P)
        try:
            per_rank = run_ranks(P["nprocs"], program, sequential=P["sequential"])
        except RankFailure as e:
            logger.debug(f"Rank {e.rank} failed", exc_info=e.error)
            raise e.error
        self.results = self.summarize(per_rank, P)
        self.analyze()
        return self.results

    def summarize(self, per_rank, P):
        data_dir = Path(P["data_dir"])
        timings = {}
        for result in per_rank:
            for phase, seconds in result["timings"].items():
                timings[phase] = max(timings.get(phase, 0.0), seconds)
        return {
            "workload": self.workload.spec.kind.value,
            "nprocs": P["nprocs"],
            "level": int(P["level"]),
            "run_id": per_rank[0]["run_id"],
            "history_hit": per_rank[0]["history_hit"],
            "history_registered": per_rank[0]["history_registered"],
            "ranks": per_rank,
            "files": sorted(p.name for p in data_dir.iterdir() if p.is_file()),
            "bytes_written": per_rank[0]["bytes_written"],
            "timings": timings,
        }

    def analyze(self, indent="", **kwargs):
        """Print the results of the run.

        Parameters
        ----------
        indent: str
            An extra indentation for the output
        """
        results = self.results
        if results["history_hit"]:
            text = "The index distribution was replayed from a history file."
        else:
            text = "The edges were distributed among the ranks."
            if results["history_registered"]:
                text += " The distribution was saved to a history file."
        printer.normal(__(text, indent=4 * " ", wrap=True, dedent=False))

        printer.normal("")
        printer.normal("       Rank  Edges  Nodes  Owned  Ghosts  Ring shifts")
        printer.normal("       ----------------------------------------------")
        for rank in results["ranks"]:
            printer.normal(
                f"      {rank['rank']:5d} {rank['local_edges']:6d} "
                f"{rank['local_nodes']:6d} {rank['owned_nodes']:6d} "
                f"{rank['local_nodes'] - rank['owned_nodes']:7d} "
                f"{rank['ring_shifts']:12d}"
            )
        printer.normal("")
        printer.normal(
            __(
                f"Wrote {results['bytes_written']} bytes to "
                f"{len(results['files'])} files: {', '.join(results['files'])}",
                indent=4 * " ",
                wrap=True,
                dedent=False,
            )
        )
        printer.normal("")


class Pipeline(object):
    """The program every rank runs."""

    def __init__(self, workload, P):
        self.workload = workload
        self.P = P

    def __call__(self, comm):
        P = self.P
        workload = self.workload
        mesh = workload.mesh
        pv = workload.partition
        level = OrgLevel(int(P["level"]))
        timer = _Timer(comm)
        catalog = None

        def open_catalog():
            nonlocal catalog
            catalog = Catalog.initialize(
                P["app_name"], P["catalog_dir"], comm.nprocs, org_level=level
            )
            return catalog.run_id

        run_id = comm.on_root(open_catalog)
        handle = SDMHandle(comm, catalog, P["data_dir"])

        # Result groups first, so their labels start at G0
        for group_spec in workload.spec.result_groups:
            handle.define_group(
                group_spec.names,
                DataType.FLOAT64,
                workload.global_count(group_spec),
                Kind.RESULT,
                org_level=level,
            )

        offsets = mesh.offsets
        attributes = {
            name: {"data_type": DataType.FLOAT64}
            for name in mesh.edge_array_names
        }
        attributes.update(
            {
                name: {"data_type": DataType.FLOAT64, "global_count": mesh.total_nodes}
                for name in mesh.node_array_names
            }
        )
        handle.define_group(
            ["edge1", "edge2"] + mesh.edge_array_names + mesh.node_array_names,
            DataType.INT32,
            mesh.total_edges,
            Kind.IMPORT,
            attributes=attributes,
            source=str(workload.mesh_path.absolute()),
        )

        # The index distribution
        key = (mesh.total_nodes, mesh.total_edges, comm.nprocs)
        record = comm.on_root(lambda: catalog.lookup_index_history(*key))
        history_hit = record is not None and P["use_history"]
        registered = False
        if not history_hit:
            with timer("import"):
                if P["import_method"] == "broadcast":
                    edges = self._import_broadcast(handle, mesh, offsets, comm)
                else:
                    edges = handle.import_edges(mesh.total_edges, offsets=offsets)
        with timer("distribution"):
            if history_hit:
                error = index_set = None
                try:
                    index_set = partition_index_with_history(record, comm.rank, pv)
                except SDMError as e:
                    error = e
                comm.agree(error)
            else:
                index_set = distribute_edges(edges, pv, comm, strategy=P["strategy"])
                if P["register_history"] and record is None:
                    index_registry(catalog, index_set, comm, P["history_dir"])
                    registered = True
        ring_shifts = comm.counters["ring_shift"]

        # The arrays on edges and nodes
        error = None
        with timer("import"):
            for k, name in enumerate(mesh.edge_array_names):
                handle.set_data_view(name, index_set.held_edges)
                values = handle.import_with_view(name, offsets[name], mesh.total_edges)
                expected = workloads.edge_array_values(k, mesh.total_edges)
                if error is None and not np.array_equal(
                    values, expected[index_set.held_edges.local_to_global]
                ):
                    error = VerificationError(
                        f"Imported {name} is wrong on rank {comm.rank}"
                    )
            for k, name in enumerate(mesh.node_array_names):
                handle.set_data_view(name, index_set.node_map)
                values = handle.import_with_view(name, offsets[name], mesh.total_nodes)
                expected = workloads.node_array_values(k, mesh.total_nodes)
                if error is None and not np.array_equal(
                    values, expected[index_set.node_map.local_to_global]
                ):
                    error = VerificationError(
                        f"Imported {name} is wrong on rank {comm.rank}"
                    )
        comm.agree(error)
        handle.release_importlist()

        # Results
        handle.partition_table(pv)
        datasets = []
        for group_spec in workload.spec.result_groups:
            global_count = workload.global_count(group_spec)
            for name in group_spec.names:
                if group_spec.association == "triangle":
                    view = handle.set_data_view(
                        name,
                        MapArray.block(global_count, comm.rank, comm.nprocs),
                        owner=block_owner(global_count, comm.nprocs),
                    )
                elif group_spec.components > 1:
                    c = group_spec.components
                    view = handle.set_data_view(
                        name,
                        index_set.node_map.expand(c),
                        owner=np.repeat(pv.owner, c),
                    )
                else:
                    view = handle.set_data_view(
                        name, index_set.node_map, owner="nodes"
                    )
                datasets.append((len(datasets), name, view))

        bytes_written = 0
        with timer("write"):
            for timestep in range(1, workload.spec.timesteps + 1):
                for k, name, view in datasets:
                    values = workloads.result_values(
                        k, timestep, view.map.local_to_global
                    )
                    region = handle.collective_write(
                        name, timestep, values, method=P["write_method"]
                    )
                    bytes_written += region.length

        error = None
        with timer("read"):
            for timestep in range(1, workload.spec.timesteps + 1):
                for k, name, view in datasets:
                    values = handle.collective_read(name, timestep)
                    expected = workloads.result_values(
                        k, timestep, view.map.local_to_global
                    )
                    if error is None and not np.array_equal(values, expected):
                        error = VerificationError(
                            f"{name} at timestep {timestep} reads back wrong on rank "
                            f"{comm.rank}"
                        )
        comm.agree(error)

        handle.finalize()
        return {
            "rank": comm.rank,
            "run_id": run_id,
            "history_hit": history_hit,
            "history_registered": registered,
            "local_edges": index_set.local_edges,
            "local_nodes": index_set.local_nodes,
            "owned_nodes": index_set.owned_node_count,
            "ring_shifts": ring_shifts,
            "stats": index_set.stats,
            "bytes_written": bytes_written,
            "timings": timer.seconds,
        }

    def _import_broadcast(self, handle, mesh, offsets, comm):
        first = handle.import_broadcast("edge1", offsets["edge1"], mesh.total_edges)
        second = handle.import_broadcast("edge2", offsets["edge2"], mesh.total_edges)
        lo, hi = block_range(mesh.total_edges, comm.rank, comm.nprocs)
        return EdgeList(first, second, np.arange(lo, hi))
