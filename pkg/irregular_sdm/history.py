# -*- coding: utf-8 -*-

"""History files: completed index distributions saved for later runs.

Distributing the edges among the ranks costs a pass of every block around the
ring. When a run with the same mesh size and number of processes has already
done it, each rank can instead read its own section of the history file with
one contiguous read.

A history file starts with a header::

    magic "SDMH", version u32, total_nodes u64, total_edges u64, nprocs u32

followed by one section per rank, in rank order::

    local_edges u64, local_edges x (edge i64, edge1 i64, edge2 i64),
    owned_node_count u64, local_nodes x node i64

All integers are little-endian. The sections are written concurrently in the
background; the catalog learns about the file only once it is complete and on
disk.
"""

from concurrent.futures import ThreadPoolExecutor
import logging
import os
from pathlib import Path
import threading

import numpy as np

from irregular_sdm import metadata
from irregular_sdm.catalog import IndexHistoryRecord
from irregular_sdm.errors import (
    ConflictError,
    HistoryCorruptError,
    HistoryMismatch,
    RankFailure,
    ValidationError,
)
from irregular_sdm.harness import run_ranks
from irregular_sdm.partition import (
    DistributionStats,
    LocalIndexSet,
    MapArray,
    block_range,
    distribute_edges,
    localize_vector,
)

logger = logging.getLogger(__name__)

HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("total_nodes", "<u8"),
        ("total_edges", "<u8"),
        ("nprocs", "<u4"),
    ]
)
EDGE_RECORD = np.dtype([("edge", "<i8"), ("edge1", "<i8"), ("edge2", "<i8")])
COUNT = np.dtype("<u8")
NODE = np.dtype("<i8")

_executor = None
_executor_lock = threading.Lock()


def _get_executor():
    global _executor
    with _executor_lock:
        if _executor is None:
            _executor = ThreadPoolExecutor(
                max_workers=8, thread_name_prefix="sdm-history"
            )
        return _executor


def section_size(local_edges, local_nodes):
    """Bytes taken by the section of one rank."""
    return (
        COUNT.itemsize
        + local_edges * EDGE_RECORD.itemsize
        + COUNT.itemsize
        + local_nodes * NODE.itemsize
    )


def section_offsets(edge_counts, node_counts):
    """Byte offsets of every section and the total size of the file."""
    offsets = []
    offset = HEADER.itemsize
    for edges, nodes in zip(edge_counts, node_counts):
        offsets.append(offset)
        offset += section_size(edges, nodes)
    return offsets, offset


def encode_section(index_set):
    """The bytes of the section of a LocalIndexSet."""
    records = np.empty(index_set.local_edges, dtype=EDGE_RECORD)
    records["edge"] = index_set.held_edges.local_to_global
    records["edge1"] = index_set.edge1
    records["edge2"] = index_set.edge2
    return b"".join(
        (
            np.array([index_set.local_edges], dtype=COUNT).tobytes(),
            records.tobytes(),
            np.array([index_set.owned_node_count], dtype=COUNT).tobytes(),
            index_set.node_map.local_to_global.astype(NODE).tobytes(),
        )
    )


class HistoryFile(object):
    """Reading and writing one history file.

    Attributes
    ----------
    path : pathlib.Path
        Where the file is.
    """

    def __init__(self, path):
        self.path = Path(path)

    def __repr__(self):
        return f"HistoryFile('{self.path}')"

    def create(self, total_nodes, total_edges, nprocs, size):
        """Write the header and size the file so sections can be filled in."""
        header = np.zeros(1, dtype=HEADER)
        header["magic"] = metadata.history_magic
        header["version"] = metadata.history_version
        header["total_nodes"] = total_nodes
        header["total_edges"] = total_edges
        header["nprocs"] = nprocs
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("wb") as fd:
            fd.write(header.tobytes())
            fd.truncate(size)

    def write_section(self, offset, data):
        with self.path.open("r+b") as fd:
            fd.seek(offset)
            fd.write(data)
            fd.flush()
            os.fsync(fd.fileno())

    def read_header(self):
        """The header as a dict, checked for magic and version."""
        try:
            with self.path.open("rb") as fd:
                raw = fd.read(HEADER.itemsize)
        except FileNotFoundError:
            raise HistoryCorruptError(f"History file {self.path} is missing")
        if len(raw) < HEADER.itemsize:
            raise HistoryCorruptError(f"History file {self.path} has no header")
        header = np.frombuffer(raw, dtype=HEADER)[0]
        if header["magic"] != metadata.history_magic:
            raise HistoryCorruptError(f"{self.path} is not a history file")
        if header["version"] != metadata.history_version:
            raise HistoryCorruptError(
                f"{self.path} has version {header['version']}, expected "
                f"{metadata.history_version}"
            )
        return {
            "total_nodes": int(header["total_nodes"]),
            "total_edges": int(header["total_edges"]),
            "nprocs": int(header["nprocs"]),
        }

    def read_section(self, offset, local_edges, local_nodes):
        """Read a section in one contiguous read.

        Returns
        -------
        (numpy.ndarray, int, numpy.ndarray)
            The edge records, the owned node count and the node map.
        """
        size = section_size(local_edges, local_nodes)
        with self.path.open("rb") as fd:
            fd.seek(offset)
            raw = fd.read(size)
        if len(raw) != size:
            raise HistoryCorruptError(
                f"History file {self.path} is truncated: the section at {offset} "
                f"needs {size} bytes, found {len(raw)}"
            )
        position = 0
        count = int(np.frombuffer(raw, dtype=COUNT, count=1, offset=position)[0])
        if count != local_edges:
            raise HistoryCorruptError(
                f"The section at {offset} of {self.path} holds {count} edges, the "
                f"catalog says {local_edges}"
            )
        position += COUNT.itemsize
        records = np.frombuffer(raw, dtype=EDGE_RECORD, count=count, offset=position)
        position += count * EDGE_RECORD.itemsize
        owned = int(np.frombuffer(raw, dtype=COUNT, count=1, offset=position)[0])
        position += COUNT.itemsize
        nodes = np.frombuffer(raw, dtype=NODE, count=local_nodes, offset=position)
        if owned > local_nodes:
            raise HistoryCorruptError(
                f"The section at {offset} of {self.path} owns {owned} of "
                f"{local_nodes} nodes"
            )
        return records, owned, nodes


class AsyncTicket(object):
    """Completion token of a history file being written in the background.

    The ticket is shared by all ranks of the job, so copying it (as the
    collectives do) gives the same ticket.

    Attributes
    ----------
    record : IndexHistoryRecord
        The record that is inserted in the catalog once the file is complete.
    """

    def __init__(self, record, history_file, catalog):
        self.record = record
        self.history_file = history_file
        self._catalog = catalog
        self._remaining = record.nprocs
        self._lock = threading.Lock()
        self._event = threading.Event()
        self._error = None

    def __repr__(self):
        state = "done" if self.done() else f"{self._remaining} sections pending"
        return f"AsyncTicket({self.history_file.path.name}, {state})"

    def __deepcopy__(self, memo):
        return self

    @property
    def key(self):
        return self.record.key

    def done(self):
        return self._event.is_set()

    def submit(self, offset, data):
        """Queue the write of one section."""
        future = _get_executor().submit(self.history_file.write_section, offset, data)
        future.add_done_callback(self._section_done)
        return future

    def _section_done(self, future):
        with self._lock:
            error = future.exception()
            if error is not None and self._error is None:
                self._error = error
            self._remaining -= 1
            if self._remaining > 0:
                return
        if self._error is None:
            try:
                self._catalog.insert_index_history(self.record)
            except Exception as e:
                self._error = e
        if self._error is None:
            logger.info(f"History {self.history_file.path} is complete")
        else:
            logger.warning(
                f"Writing history {self.history_file.path} failed: {self._error}"
            )
        self._event.set()

    def wait(self, timeout=None):
        """Block until the file is on disk and registered in the catalog.

        Raises
        ------
        HistoryCorruptError
            If writing a section or registering the file failed.
        """
        if not self._event.wait(timeout):
            raise TimeoutError(f"History {self.history_file.path} is still pending")
        if self._error is not None:
            raise HistoryCorruptError(
                f"History {self.history_file.path} was not written: {self._error}"
            ) from self._error


def wait(ticket, timeout=None):
    ticket.wait(timeout)


def index_registry(catalog, index_set, comm, history_dir):
    """Save an index distribution to a history file. Collective.

    Every rank writes its own section at an offset computed from the sizes of
    all the sections; rank 0 registers the file in the catalog once all are on
    disk. The call returns while the writes are still under way.

    Parameters
    ----------
    catalog : Catalog or None
        The catalog, on rank 0 only.
    index_set : LocalIndexSet
        This rank's result of :func:`distribute_edges`.
    comm : RankContext
        The collectives of the job.
    history_dir : str or pathlib.Path
        The directory for history files.

    Returns
    -------
    AsyncTicket
    """
    key = (index_set.total_nodes, index_set.total_edges, comm.nprocs)
    counts = comm.allgather((index_set.local_edges, index_set.local_nodes))
    edge_counts = [c[0] for c in counts]
    node_counts = [c[1] for c in counts]
    offsets, size = section_offsets(edge_counts, node_counts)

    def start():
        pending = catalog.pending
        if pending is not None and not pending.done() and pending.key == key:
            raise ConflictError(
                "A history for {} nodes, {} edges and {} processes is being "
                "written".format(*key)
            )
        if catalog.lookup_index_history(*key) is not None:
            raise ConflictError(
                "A history already exists for {} nodes, {} edges and {} "
                "processes".format(*key)
            )
        path = Path(history_dir).absolute() / metadata.history_file_name(*key)
        history_file = HistoryFile(path)
        history_file.create(*key, size)
        record = IndexHistoryRecord(
            total_nodes=key[0],
            total_edges=key[1],
            nprocs=key[2],
            history_path=str(path),
            per_rank_edge_counts=edge_counts,
            per_rank_node_counts=node_counts,
            per_rank_byte_offsets=offsets,
        )
        record.validate()
        ticket = AsyncTicket(record, history_file, catalog)
        catalog.attach_pending(ticket)
        logger.debug(f"Writing history {path}, {size} bytes")
        return ticket

    ticket = comm.on_root(start)
    ticket.submit(offsets[comm.rank], encode_section(index_set))
    return ticket


def partition_index_with_history(record, rank, pv, nprocs=None):
    """Rebuild a rank's index distribution from a history file.

    Parameters
    ----------
    record : IndexHistoryRecord
        The catalog record of the history, from lookup_index_history.
    rank : int
        The rank whose section is read.
    pv : PartitioningVector
        The partitioning vector of this run.
    nprocs : int, optional
        The number of processes of this run, by default pv.nprocs.

    Returns
    -------
    LocalIndexSet
        Equal to what distribute_edges returns for the same mesh.

    Raises
    ------
    HistoryMismatch
        If the history was made for another number of processes. The caller
        should distribute the edges instead.
    HistoryCorruptError
        If the file is missing, truncated or disagrees with the catalog or the
        partitioning vector.
    """
    nprocs = pv.nprocs if nprocs is None else nprocs
    if record.nprocs != nprocs:
        raise HistoryMismatch(record.nprocs, nprocs)
    if not 0 <= rank < nprocs:
        raise ValidationError(f"Rank {rank} is outside [0, {nprocs})")

    history_file = HistoryFile(record.history_path)
    header = history_file.read_header()
    expected = {
        "total_nodes": record.total_nodes,
        "total_edges": record.total_edges,
        "nprocs": record.nprocs,
    }
    if header != expected:
        raise HistoryCorruptError(
            f"The header of {history_file.path} ({header}) does not match the "
            f"catalog ({expected})"
        )
    if pv.total_nodes != record.total_nodes:
        raise HistoryCorruptError(
            f"The history is for {record.total_nodes} nodes, the partitioning "
            f"vector has {pv.total_nodes}"
        )

    records, owned_count, nodes = history_file.read_section(
        record.per_rank_byte_offsets[rank],
        record.per_rank_edge_counts[rank],
        record.per_rank_node_counts[rank],
    )
    owned, n_owned = localize_vector(pv, rank)
    if owned_count != n_owned or not np.array_equal(nodes[:owned_count], owned):
        raise HistoryCorruptError(
            f"The nodes rank {rank} owns in {history_file.path} differ from the "
            "partitioning vector"
        )

    endpoints = np.column_stack((records["edge1"], records["edge2"])).astype(np.int64)
    logger.debug(f"Rank {rank} replayed {records.shape[0]} edges from history")
    return LocalIndexSet(
        rank=rank,
        nprocs=nprocs,
        total_nodes=record.total_nodes,
        total_edges=record.total_edges,
        held_edges=MapArray(records["edge"].copy()),
        held_edge_endpoints=endpoints.reshape(-1, 2),
        node_map=MapArray(nodes.copy()),
        owned_node_count=owned_count,
        stats=DistributionStats(strategy="history", history_reads=1),
    )


def _partition_for(pv, nprocs):
    if callable(pv):
        return pv(nprocs)
    if isinstance(pv, dict):
        return pv[nprocs]
    return pv


def precreate_histories(catalog, mesh, pv, nprocs_list, history_dir):
    """Create history files ahead of time for several numbers of processes.

    Parameters
    ----------
    catalog : Catalog
        The catalog to register the histories in.
    mesh : Mesh
        The mesh, with its edges and node count.
    pv : PartitioningVector, dict or callable
        The partitioning vector for each number of processes: one vector, a
        dict by number of processes, or a function of the number of processes.
    nprocs_list : [int]
        The numbers of processes.
    history_dir : str or pathlib.Path
        The directory for the history files.

    Returns
    -------
    [IndexHistoryRecord]
    """
    records = []
    for nprocs in nprocs_list:
        partition = _partition_for(pv, nprocs)

        def program(comm, partition=partition):
            lo, hi = block_range(mesh.total_edges, comm.rank, comm.nprocs)
            index_set = distribute_edges(mesh.edges.slice(lo, hi), partition, comm)
            return index_registry(
                catalog if comm.rank == 0 else None, index_set, comm, history_dir
            )

        try:
            tickets = run_ranks(nprocs, program)
        except RankFailure as e:
            raise e.error
        tickets[0].wait()
        records.append(tickets[0].record)
        logger.info(f"Created the history for {nprocs} processes")
    return records
