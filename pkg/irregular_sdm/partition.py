# -*- coding: utf-8 -*-

"""Index distribution: assigning the edges and nodes of a mesh to ranks.

A node belongs to the rank the partitioning vector names for it. An edge is
held by every rank that owns at least one of its endpoints, so an edge between
nodes of two ranks is a ghost edge on both, and its foreign endpoint is a
ghost node. Only a single level of ghosts is built.

The edges are first imported in contiguous blocks, one per rank. Each block
then travels once around the ring of ranks; every rank scans each block as it
passes and keeps the edges it must hold. The kept edges are appended to a
buffer that doubles when full, so each block is read exactly once.
"""

from dataclasses import dataclass, field
import logging
from pathlib import Path

import numpy as np

from irregular_sdm.errors import CollectiveMismatchError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class MapArray:
    """The global index of every element of a local array."""

    local_to_global: np.ndarray

    def __post_init__(self):
        self.local_to_global = np.asarray(self.local_to_global, dtype=np.int64)

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, MapArray):
            return NotImplemented
        return np.array_equal(self.local_to_global, other.local_to_global)

    def __repr__(self):
        return f"MapArray({self.local_to_global.tolist()})"

    @property
    def count(self):
        return int(self.local_to_global.shape[0])

    @classmethod
    def identity(cls, count):
        return cls(np.arange(count, dtype=np.int64))

    @classmethod
    def block(cls, total_items, rank, nprocs):
        """The contiguous block of a rank, see :func:`block_range`."""
        lo, hi = block_range(total_items, rank, nprocs)
        return cls(np.arange(lo, hi, dtype=np.int64))

    def expand(self, components):
        """Map each element to `components` consecutive elements.

        Used for datasets storing several values per node or edge.
        """
        base = self.local_to_global[:, np.newaxis] * components
        return MapArray((base + np.arange(components)).ravel())

    def validate(self, global_count):
        """Check the entries are unique and inside [0, global_count)."""
        entries = self.local_to_global
        if entries.size == 0:
            return
        if entries.min() < 0 or entries.max() >= global_count:
            bad = entries[(entries < 0) | (entries >= global_count)][0]
            raise ValidationError(
                f"Map entry {bad} is outside the global array of {global_count}"
            )
        if np.unique(entries).size != entries.size:
            raise ValidationError("Map array entries are not unique")


@dataclass(eq=False)
class EdgeList:
    """Mesh connectivity: edge e joins nodes edge1[e] and edge2[e].

    edge_ids gives the global id of each edge, so a slice of the mesh keeps
    track of which edges it holds.
    """

    edge1: np.ndarray
    edge2: np.ndarray
    edge_ids: np.ndarray = None

    def __post_init__(self):
        self.edge1 = np.asarray(self.edge1, dtype=np.int64)
        self.edge2 = np.asarray(self.edge2, dtype=np.int64)
        if self.edge1.shape != self.edge2.shape or self.edge1.ndim != 1:
            raise ValidationError(
                f"edge1 and edge2 differ in length: {self.edge1.shape} vs "
                f"{self.edge2.shape}"
            )
        if self.edge_ids is None:
            self.edge_ids = np.arange(self.edge1.shape[0], dtype=np.int64)
        else:
            self.edge_ids = np.asarray(self.edge_ids, dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, EdgeList):
            return NotImplemented
        return (
            np.array_equal(self.edge1, other.edge1)
            and np.array_equal(self.edge2, other.edge2)
            and np.array_equal(self.edge_ids, other.edge_ids)
        )

    @property
    def total_edges(self):
        return int(self.edge1.shape[0])

    def slice(self, lo, hi):
        return EdgeList(self.edge1[lo:hi], self.edge2[lo:hi], self.edge_ids[lo:hi])

    def validate(self, total_nodes):
        for name in ("edge1", "edge2"):
            nodes = getattr(self, name)
            if nodes.size > 0 and (nodes.min() < 0 or nodes.max() >= total_nodes):
                raise ValidationError(
                    f"{name} refers to nodes outside [0, {total_nodes})"
                )


class PartitioningVector(object):
    """The owning rank of every node of a mesh, replicated on all ranks.

    Attributes
    ----------
    owner : numpy.ndarray
        owner[g] is the rank node g is assigned to.
    nprocs : int
        The number of ranks the vector was made for.
    """

    def __init__(self, owner, nprocs):
        self.owner = np.asarray(owner, dtype=np.int64)
        self.nprocs = int(nprocs)
        self.validate()

    def __repr__(self):
        return f"PartitioningVector({self.owner.tolist()}, nprocs={self.nprocs})"

    def __eq__(self, other):
        if not isinstance(other, PartitioningVector):
            return NotImplemented
        return self.nprocs == other.nprocs and np.array_equal(self.owner, other.owner)

    @property
    def total_nodes(self):
        return int(self.owner.shape[0])

    def validate(self):
        if self.nprocs < 1:
            raise ValidationError(f"nprocs must be at least 1, not {self.nprocs}")
        if self.owner.size > 0:
            bad = (self.owner < 0) | (self.owner >= self.nprocs)
            if bad.any():
                node = int(np.flatnonzero(bad)[0])
                raise ValidationError(
                    f"Node {node} is assigned to rank {self.owner[node]}, outside "
                    f"[0, {self.nprocs})"
                )

    @classmethod
    def from_file(cls, path, nprocs):
        """Read a vector of little-endian 4-byte ranks, as partitioners write."""
        owner = np.fromfile(Path(path), dtype="<i4")
        return cls(owner, nprocs)

    def to_file(self, path):
        self.owner.astype("<i4").tofile(Path(path))

    @classmethod
    def blocks(cls, total_nodes, nprocs, order=None):
        """A trivial partition: contiguous blocks of nodes, in the given order."""
        owner = np.empty(total_nodes, dtype=np.int64)
        nodes = np.arange(total_nodes) if order is None else np.asarray(order)
        for rank in range(nprocs):
            lo, hi = block_range(total_nodes, rank, nprocs)
            owner[nodes[lo:hi]] = rank
        return cls(owner, nprocs)


class GrowableBuffer(object):
    """Rows appended to storage that doubles in capacity when full.

    Attributes
    ----------
    capacity : int
        The number of rows the storage can hold.
    length : int
        The number of rows in use.
    growths : int
        How many times the storage has doubled.
    appended : int
        The number of rows ever appended.
    """

    def __init__(self, capacity, width=1, dtype=np.int64):
        self.capacity = max(1, int(capacity))
        self.width = width
        self.length = 0
        self.growths = 0
        self.appended = 0
        self._storage = np.empty((self.capacity, width), dtype=dtype)

    def __len__(self):
        return self.length

    def grow(self):
        """Double the capacity, keeping the contents."""
        storage = np.empty((self.capacity * 2, self.width), dtype=self._storage.dtype)
        storage[: self.length] = self._storage[: self.length]
        self._storage = storage
        self.capacity *= 2
        self.growths += 1
        logger.debug(f"Buffer grown to {self.capacity} rows")
        return self

    def append(self, rows):
        rows = np.asarray(rows, dtype=self._storage.dtype).reshape(-1, self.width)
        n = rows.shape[0]
        while self.length + n > self.capacity:
            self.grow()
        self._storage[self.length : self.length + n] = rows
        self.length += n
        self.appended += n

    def push(self, *row):
        self.append(np.array(row))

    @property
    def contents(self):
        """The rows in use, as a view of the storage."""
        return self._storage[: self.length]


def grow(buffer):
    """Double the capacity of a GrowableBuffer."""
    return buffer.grow()


@dataclass
class DistributionStats:
    """Counters recorded while distributing the edges of one rank."""

    strategy: str = "single-pass"
    ring_shifts: int = 0
    block_scans: int = 0
    appends: int = 0
    ghost_rule_hits: int = 0
    growths: int = 0
    history_reads: int = 0


@dataclass(eq=False)
class LocalIndexSet:
    """The edges and nodes one rank holds after the index distribution.

    Attributes
    ----------
    rank, nprocs : int
        The rank and number of ranks of the distribution.
    total_nodes, total_edges : int
        The size of the global mesh.
    held_edges : MapArray
        Global ids of the held edges, in discovery order.
    held_edge_endpoints : numpy.ndarray
        (local_edges, 2) array of the endpoints (edge1, edge2) of each held edge.
    node_map : MapArray
        Owned nodes in ascending order followed by ghost nodes in the order
        they were first met.
    owned_node_count : int
        The number of owned nodes at the front of node_map.
    stats : DistributionStats
        How the set was built; not part of equality.
    """

    rank: int
    nprocs: int
    total_nodes: int
    total_edges: int
    held_edges: MapArray
    held_edge_endpoints: np.ndarray
    node_map: MapArray
    owned_node_count: int
    stats: DistributionStats = field(default_factory=DistributionStats)

    def __eq__(self, other):
        if not isinstance(other, LocalIndexSet):
            return NotImplemented
        return (
            self.rank == other.rank
            and self.nprocs == other.nprocs
            and self.total_nodes == other.total_nodes
            and self.total_edges == other.total_edges
            and self.held_edges == other.held_edges
            and np.array_equal(self.held_edge_endpoints, other.held_edge_endpoints)
            and self.node_map == other.node_map
            and self.owned_node_count == other.owned_node_count
        )

    @property
    def local_edges(self):
        return self.held_edges.count

    @property
    def local_nodes(self):
        return self.node_map.count

    @property
    def owned_nodes(self):
        return self.node_map.local_to_global[: self.owned_node_count]

    @property
    def ghost_nodes(self):
        return self.node_map.local_to_global[self.owned_node_count :]

    @property
    def edge1(self):
        return self.held_edge_endpoints[:, 0]

    @property
    def edge2(self):
        return self.held_edge_endpoints[:, 1]

    def localized_edges(self):
        """The held edges with endpoints as positions in node_map."""
        order = np.argsort(self.node_map.local_to_global, kind="stable")
        positions = np.searchsorted(
            self.node_map.local_to_global, self.held_edge_endpoints, sorter=order
        )
        return order[positions]


def localize_vector(pv, rank):
    """The nodes a rank owns, ascending, and how many there are.

    Parameters
    ----------
    pv : PartitioningVector
        The replicated partitioning vector.
    rank : int
        The rank to localize for.

    Returns
    -------
    (numpy.ndarray, int)
    """
    pv.validate()
    owned = np.flatnonzero(pv.owner == rank).astype(np.int64)
    return owned, int(owned.size)


def block_range(total_items, rank, nprocs):
    """The half-open range [lo, hi) of items a rank imports.

    The items are divided as equally as possible; the first
    ``total_items % nprocs`` ranks get one extra item.
    """
    if nprocs < 1:
        raise ValidationError(f"nprocs must be at least 1, not {nprocs}")
    base, extra = divmod(int(total_items), nprocs)
    lo = rank * base + min(rank, extra)
    hi = lo + base + (1 if rank < extra else 0)
    return lo, hi


def _held(block, owner, rank):
    """The ghost rule: an edge is held if either endpoint is owned."""
    return (owner[block.edge1] == rank) | (owner[block.edge2] == rank)


def distribute_edges(local_block, pv, comm, strategy="single-pass"):
    """Distribute the edges of a mesh among the ranks. Collective.

    Parameters
    ----------
    local_block : EdgeList
        The block of edges this rank imported, with their global ids.
    pv : PartitioningVector
        The partitioning vector, identical on every rank.
    comm : RankContext
        The collectives of the job.
    strategy : str
        "single-pass" appends held edges to a doubling buffer while scanning.
        "two-pass" first counts the held edges around the whole ring and then
        scans again into a buffer of exactly that size.

    Returns
    -------
    LocalIndexSet
    """
    rank, nprocs = comm.rank, comm.nprocs
    sizes = comm.allgather((pv.nprocs, pv.total_nodes, local_block.total_edges))
    if len({size[:2] for size in sizes}) > 1:
        raise CollectiveMismatchError(
            "Ranks passed partitioning vectors of different shapes: "
            + ", ".join(f"{n} nodes for {p} processes" for p, n, _ in sizes)
        )
    if pv.nprocs != nprocs:
        raise ValidationError(
            f"The partitioning vector is for {pv.nprocs} processes, not {nprocs}"
        )
    total_nodes = pv.total_nodes
    total_edges = sum(size[2] for size in sizes)
    local_block.validate(total_nodes)

    order = np.argsort(local_block.edge_ids, kind="stable")
    block = EdgeList(
        local_block.edge1[order], local_block.edge2[order], local_block.edge_ids[order]
    )
    owner = pv.owner
    stats = DistributionStats(strategy=strategy)

    if strategy == "single-pass":
        capacity = 2 * (total_edges // nprocs)
    elif strategy == "two-pass":
        capacity = 0
        for step in range(nprocs):
            if step > 0:
                block = comm.ring_shift(block)
                stats.ring_shifts += 1
            stats.block_scans += 1
            capacity += int(np.count_nonzero(_held(block, owner, rank)))
        # Bring our own block home again for the second pass.
        if nprocs > 1:
            block = comm.ring_shift(block)
            stats.ring_shifts += 1
    else:
        raise ValidationError(f"Unknown distribution strategy '{strategy}'")

    owned, n_owned = localize_vector(pv, rank)
    seen = np.zeros(total_nodes, dtype=bool)
    seen[owned] = True
    ghosts = []
    buffer = GrowableBuffer(capacity, width=3)

    for step in range(nprocs):
        if step > 0:
            block = comm.ring_shift(block)
            stats.ring_shifts += 1
        stats.block_scans += 1
        hit = _held(block, owner, rank)
        rows = np.column_stack(
            (block.edge_ids[hit], block.edge1[hit], block.edge2[hit])
        )
        stats.ghost_rule_hits += rows.shape[0]
        buffer.append(rows)

        endpoints = rows[:, 1:].ravel()
        new = endpoints[~seen[endpoints]]
        if new.size > 0:
            _, first = np.unique(new, return_index=True)
            new = new[np.sort(first)]
            seen[new] = True
            ghosts.append(new)

    stats.appends = buffer.appended
    stats.growths = buffer.growths
    held = buffer.contents
    node_map = np.concatenate([owned] + ghosts) if len(ghosts) > 0 else owned
    logger.debug(
        f"Rank {rank} holds {held.shape[0]} edges and {node_map.size} nodes "
        f"({n_owned} owned)"
    )
    return LocalIndexSet(
        rank=rank,
        nprocs=nprocs,
        total_nodes=total_nodes,
        total_edges=total_edges,
        held_edges=MapArray(held[:, 0].copy()),
        held_edge_endpoints=held[:, 1:].copy(),
        node_map=MapArray(node_map),
        owned_node_count=n_owned,
        stats=stats,
    )


def partition_index_size(index_set):
    """The number of edges a rank holds, including ghost edges."""
    return index_set.local_edges


def partition_data_size(index_set):
    """The number of nodes a rank holds, including ghost nodes."""
    return index_set.local_nodes
