# -*- coding: utf-8 -*-

"""Brute-force references for the index distribution and collective writes.

Everything here runs in a single context with plain loops, so it can be
trusted to check the parallel code against.
"""

from dataclasses import dataclass
import logging
from pathlib import Path

import numpy as np

from irregular_sdm import workloads
from irregular_sdm.catalog import Catalog
from irregular_sdm.dataio import SDMHandle
from irregular_sdm.errors import RankFailure, VerificationError
from irregular_sdm.harness import run_ranks
from irregular_sdm.history import index_registry, partition_index_with_history
from irregular_sdm.metadata import DataType, Kind, value_type
from irregular_sdm.partition import (
    DistributionStats,
    LocalIndexSet,
    MapArray,
    block_range,
    distribute_edges,
)

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class OracleResult:
    """The reference index sets of every rank and the reference region."""

    index_sets: list
    region: bytes


def reference_index_set(edges, owner, rank, nprocs, total_nodes):
    """The index set of one rank, scanning the blocks in ring order.

    At step s a rank scans the block imported by rank (rank - s) mod nprocs.
    Held edges are kept in scan order; owned nodes come first in ascending
    order, then ghost nodes in the order they are first met.
    """
    total_edges = len(edges[0])
    held = []
    endpoints = []
    owned = [g for g in range(total_nodes) if owner[g] == rank]
    seen = set(owned)
    ghosts = []
    for step in range(nprocs):
        block = (rank - step) % nprocs
        lo, hi = block_range(total_edges, block, nprocs)
        for e in range(lo, hi):
            a, b = int(edges[0][e]), int(edges[1][e])
            if owner[a] != rank and owner[b] != rank:
                continue
            held.append(e)
            endpoints.append((a, b))
            for node in (a, b):
                if node not in seen:
                    seen.add(node)
                    ghosts.append(node)
    return LocalIndexSet(
        rank=rank,
        nprocs=nprocs,
        total_nodes=total_nodes,
        total_edges=total_edges,
        held_edges=MapArray(held),
        held_edge_endpoints=np.array(endpoints, dtype=np.int64).reshape(-1, 2),
        node_map=MapArray(owned + ghosts),
        owned_node_count=len(owned),
        stats=DistributionStats(strategy="oracle"),
    )


def reference_region(index_sets, owner, value, dtype=None):
    """The bytes of a node dataset written one rank after the other.

    Each rank computes value(g) for the nodes in its map and stores those it
    owns into a global array, which is then written in global order.
    """
    dtype = value_type.dtype if dtype is None else dtype
    total_nodes = len(owner)
    region = np.zeros(total_nodes, dtype=dtype)
    for index_set in index_sets:
        for g in index_set.node_map.local_to_global.tolist():
            if owner[g] == index_set.rank:
                region[g] = value(g)
    return region.tobytes()


def sequential_oracles(mesh, pv, nprocs=None, value=float):
    """Reference index sets of every rank and the reference region bytes.

    Parameters
    ----------
    mesh : Mesh
        The mesh, edges in global order.
    pv : PartitioningVector
        The partitioning vector.
    nprocs : int, optional
        The number of ranks, by default that of the partitioning vector.
    value : callable
        The value of node g in the region, by default float(g).

    Returns
    -------
    OracleResult
    """
    nprocs = pv.nprocs if nprocs is None else nprocs
    owner = pv.owner.tolist()
    edges = (mesh.edges.edge1.tolist(), mesh.edges.edge2.tolist())
    index_sets = [
        reference_index_set(edges, owner, rank, nprocs, mesh.total_nodes)
        for rank in range(nprocs)
    ]
    region = reference_region(index_sets, owner, value)
    return OracleResult(index_sets=index_sets, region=region)


def verify(seed, work_dir, cases=20, nprocs_list=(1, 2, 3, 4, 8)):
    """Check the parallel code against the oracles on random meshes.

    For every mesh and number of processes the edges are distributed, saved to
    a history file and replayed, and a node dataset is written. All three must
    agree with the references.

    Parameters
    ----------
    seed : int
        The seed of the first random mesh.
    work_dir : str or pathlib.Path
        Scratch directory for catalogs, histories and data files.
    cases : int
        The number of random meshes.
    nprocs_list : [int]
        The numbers of processes to try for every mesh.

    Returns
    -------
    int
        The number of (mesh, nprocs) combinations checked.

    Raises
    ------
    VerificationError
        On the first disagreement.
    """
    work_dir = Path(work_dir)
    checked = 0
    for case in range(cases):
        mesh = workloads.random_mesh(seed + case)
        directory = work_dir / f"case_{seed + case}"
        for nprocs in nprocs_list:
            pv = workloads.random_partition(seed + case, mesh.total_nodes, nprocs)
            expected = sequential_oracles(mesh, pv, nprocs)
            try:
                results = run_ranks(nprocs, _CheckProgram(mesh, pv, directory))
            except RankFailure as e:
                raise e.error
            for rank, (index_set, replay, region) in enumerate(results):
                where = f"mesh {seed + case}, rank {rank} of {nprocs}"
                if index_set != expected.index_sets[rank]:
                    raise VerificationError(
                        f"The index distribution differs for {where}"
                    )
                if replay != index_set:
                    raise VerificationError(f"The history replay differs for {where}")
                if replay.stats.ring_shifts != 0:
                    raise VerificationError(f"The replay used the ring for {where}")
                if rank == 0 and region != expected.region:
                    raise VerificationError(f"The written region differs for {where}")
            checked += 1
        logger.info(f"Mesh {seed + case} agrees with the oracles")
    return checked


class _CheckProgram(object):
    """Distribute, save, replay and write one mesh on every rank."""

    def __init__(self, mesh, pv, directory):
        self.mesh = mesh
        self.pv = pv
        self.directory = Path(directory)

    def __call__(self, comm):
        mesh = self.mesh
        lo, hi = block_range(mesh.total_edges, comm.rank, comm.nprocs)
        index_set = distribute_edges(mesh.edges.slice(lo, hi), self.pv, comm)

        catalog = None

        def open_catalog():
            nonlocal catalog
            catalog = Catalog.initialize(
                "verify", self.directory / "catalog", comm.nprocs
            )

        comm.on_root(open_catalog)
        ticket = index_registry(catalog, index_set, comm, self.directory / "history")
        ticket.wait()
        comm.barrier()
        key = (mesh.total_nodes, mesh.total_edges, comm.nprocs)
        record = comm.on_root(lambda: catalog.lookup_index_history(*key))
        replay = partition_index_with_history(record, comm.rank, self.pv)

        data_dir = self.directory / f"data_P{comm.nprocs}"
        handle = SDMHandle(comm, catalog, data_dir)
        handle.define_group(
            ["p"], DataType.FLOAT64, mesh.total_nodes, Kind.RESULT, org_level=3
        )
        handle.partition_table(self.pv)
        handle.set_data_view("p", index_set.node_map, owner="nodes")
        region = handle.collective_write(
            "p", 1, index_set.node_map.local_to_global.astype(np.float64)
        )
        content = None
        if comm.rank == 0:
            with (data_dir / region.file_id).open("rb") as fd:
                fd.seek(region.base_offset)
                content = fd.read(region.length)
        handle.finalize()
        return index_set, replay, content
